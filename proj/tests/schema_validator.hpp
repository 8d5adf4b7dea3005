#pragma once

// Enough of JSON Schema for the shipped schemas: type, enum, required,
// properties, additionalProperties, items, min/maxItems, min/maxLength,
// minimum, maximum, exclusiveMinimum, oneOf, and $ref to sibling files.

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace testutil {

class SchemaSet {
 public:
  explicit SchemaSet(std::filesystem::path dir) : dir_(std::move(dir)) {}

  // Empty when the instance conforms; otherwise one message per violation.
  std::vector<std::string> validate(const std::string& schema_file, const nlohmann::json& instance) {
    std::vector<std::string> errors;
    check(load(schema_file), instance, "$", errors);
    return errors;
  }

 private:
  const nlohmann::json& load(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    std::ifstream in(dir_ / name);
    if (!in) throw std::runtime_error("missing schema " + name);
    return cache_.emplace(name, nlohmann::json::parse(in)).first->second;
  }

  static bool has_type(const nlohmann::json& v, const std::string& t) {
    if (t == "null") return v.is_null();
    if (t == "boolean") return v.is_boolean();
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "integer") return v.is_number_integer() || (v.is_number_float() && v.get<double>() == static_cast<double>(static_cast<long long>(v.get<double>())));
    if (t == "number") return v.is_number();
    return false;
  }

  void check(const nlohmann::json& s, const nlohmann::json& v, const std::string& at, std::vector<std::string>& errors) {
    if (s.contains("$ref")) {
      check(load(s["$ref"].get<std::string>()), v, at, errors);
      return;
    }
    if (s.contains("type")) {
      bool ok = false;
      if (s["type"].is_array()) {
        for (const auto& t : s["type"]) ok = ok || has_type(v, t.get<std::string>());
      } else {
        ok = has_type(v, s["type"].get<std::string>());
      }
      if (!ok) {
        errors.push_back(at + ": expected type " + s["type"].dump() + ", got " + v.dump());
        return;
      }
    }
    if (s.contains("enum")) {
      bool found = false;
      for (const auto& e : s["enum"]) found = found || e == v;
      if (!found) errors.push_back(at + ": " + v.dump() + " not in enum");
    }
    if (s.contains("oneOf")) {
      int matches = 0;
      for (const auto& sub : s["oneOf"]) {
        std::vector<std::string> sub_errors;
        check(sub, v, at, sub_errors);
        if (sub_errors.empty()) ++matches;
      }
      if (matches != 1) errors.push_back(at + ": matched " + std::to_string(matches) + " oneOf branches");
    }
    if (v.is_number()) {
      const double x = v.get<double>();
      if (s.contains("minimum") && x < s["minimum"].get<double>()) errors.push_back(at + ": below minimum");
      if (s.contains("maximum") && x > s["maximum"].get<double>()) errors.push_back(at + ": above maximum");
      if (s.contains("exclusiveMinimum") && x <= s["exclusiveMinimum"].get<double>()) {
        errors.push_back(at + ": not above exclusiveMinimum");
      }
    }
    if (v.is_string()) {
      const auto n = v.get<std::string>().size();
      if (s.contains("minLength") && n < s["minLength"].get<std::size_t>()) errors.push_back(at + ": too short");
      if (s.contains("maxLength") && n > s["maxLength"].get<std::size_t>()) errors.push_back(at + ": too long");
    }
    if (v.is_array()) {
      if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>()) errors.push_back(at + ": too few items");
      if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>()) errors.push_back(at + ": too many items");
      if (s.contains("items")) {
        for (std::size_t i = 0; i < v.size(); ++i) check(s["items"], v[i], at + "[" + std::to_string(i) + "]", errors);
      }
    }
    if (v.is_object()) {
      if (s.contains("required")) {
        for (const auto& k : s["required"]) {
          if (!v.contains(k.get<std::string>())) errors.push_back(at + ": missing " + k.get<std::string>());
        }
      }
      const auto props = s.value("properties", nlohmann::json::object());
      for (const auto& [k, sub] : v.items()) {
        if (props.contains(k)) {
          check(props[k], sub, at + "." + k, errors);
        } else if (s.contains("additionalProperties")) {
          const auto& ap = s["additionalProperties"];
          if (ap.is_boolean()) {
            if (!ap.get<bool>()) errors.push_back(at + ": unexpected property " + k);
          } else {
            check(ap, sub, at + "." + k, errors);
          }
        }
      }
    }
  }

  std::filesystem::path dir_;
  std::map<std::string, nlohmann::json> cache_;
};

}  // namespace testutil
