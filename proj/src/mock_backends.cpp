#include "earth/mock_backends.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <set>

#include "earth/error.hpp"
#include "earth/text.hpp"

namespace earth::gateway {

namespace {

// mt19937_64 output is fixed by the standard; the distributions are not, so
// conversions are done by hand.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  std::size_t pick(std::size_t n) { return static_cast<std::size_t>(eng_() % n); }
  bool chance(double p) { return uniform() < p; }
  template <typename C>
  const auto& choice(const C& c) {
    return c[pick(std::size(c))];
  }

 private:
  std::mt19937_64 eng_;
};

constexpr std::array kVerbs{"Ignite", "Unleash", "Grow", "Bloom", "Rise", "Create", "Elevate", "Transform",
                            "Speak", "Dream", "Explore", "Shape", "Spark", "Build", "Chase", "Embrace"};
constexpr std::array kNouns{"Soul", "Future", "Ideas", "Tomorrow", "Limits", "Wings", "Roots", "Light",
                            "Motion", "Horizon", "Canvas", "Energy", "Wisdom", "Brilliance", "Possibilities",
                            "Journey", "World", "Spirit"};
constexpr std::array kAdjectives{"Bold", "Green", "Free", "Bright", "Infinite", "Wild", "Clean", "Electric",
                                 "Fearless", "Radiant", "Limitless", "Inner"};
// Off-list imagery that higher temperatures reach for.
constexpr std::array kSurreal{"Melts", "Palm", "Night", "Velvet", "Echo", "Orbit", "Glass", "Whisper",
                              "Tide", "Ember", "Mirror", "Feather"};
constexpr std::array kPrefixes{"Sure! Here's your slogan: \"", "Here is a slogan: ", "Slogan: ", "\"",
                               "Sure! Here is one: "};

const std::set<std::string>& surreal_set() {
  static const std::set<std::string> s = [] {
    std::set<std::string> out;
    for (const char* w : kSurreal) out.insert(text::normalize_tokens(w).front());
    return out;
  }();
  return s;
}

enum class Mode { theme, amplify, refine };

struct PromptView {
  Mode mode;
  std::vector<std::string> source_words;
};

std::string capitalize(std::string w) {
  if (!w.empty() && w[0] >= 'a' && w[0] <= 'z') w[0] = static_cast<char>(w[0] - 32);
  return w;
}

PromptView read_prompt(const GenerationRequest& req) {
  PromptView v{Mode::theme, {}};
  std::string source = req.user_prompt;
  if (req.user_prompt.find("Refine this tagline") != std::string::npos) {
    v.mode = Mode::refine;
    if (auto pos = req.user_prompt.find("Tagline:"); pos != std::string::npos) source = req.user_prompt.substr(pos + 8);
  } else if (req.system_prompt.find("Produce exactly one concise slogan") != std::string::npos) {
    v.mode = Mode::amplify;
  } else if (auto open = req.user_prompt.find('"'); open != std::string::npos) {
    auto close = req.user_prompt.find('"', open + 1);
    if (close != std::string::npos) source = req.user_prompt.substr(open + 1, close - open - 1);
  }
  for (auto& w : text::normalize_tokens(source)) {
    if (w.size() > 3) v.source_words.push_back(capitalize(w));
  }
  return v;
}

struct Filler {
  Rng& rng;
  const PromptView& view;
  double keep_p;
  double odd_p;

  template <typename Pool>
  std::string draw(const Pool& pool) {
    if (!view.source_words.empty() && rng.chance(keep_p)) return rng.choice(view.source_words);
    if (rng.chance(odd_p)) return rng.choice(kSurreal);
    return rng.choice(pool);
  }
  std::string verb() { return draw(kVerbs); }
  std::string noun() { return draw(kNouns); }
  std::string adj() { return draw(kAdjectives); }
};

std::string assemble(Rng& rng, const PromptView& view, double temperature) {
  Filler f{rng, view, std::clamp(1.1 - 0.45 * temperature, 0.1, 0.9), std::clamp((temperature - 0.6) * 0.35, 0.0, 0.6)};
  switch (view.mode) {
    case Mode::theme:
      switch (rng.pick(5)) {
        case 0: return f.verb() + " " + f.adj() + " " + f.noun();
        case 1: return f.verb() + " Your " + f.noun() + ", " + f.verb() + " Your " + f.noun() + ".";
        case 2: return f.adj() + " " + f.noun() + ", " + f.adj() + " " + f.noun() + ".";
        case 3: return f.noun() + " Beyond the " + f.noun();
        default: return f.verb() + " the " + f.noun() + " of " + f.noun() + "!";
      }
    case Mode::amplify:
      switch (rng.pick(4)) {
        case 0: return f.verb() + " " + f.noun() + ", " + f.verb() + " " + f.adj() + " " + f.noun() + ", " + f.verb() +
                       " your " + f.noun() + ".";
        case 1: return f.noun() + " is " + f.noun() + ", let it " + f.verb() + " your " + f.noun() + ".";
        case 2: return f.adj() + " " + f.noun() + " meets " + f.adj() + " " + f.noun() + ", inside every " + f.noun() + ".";
        default: return f.verb() + " Without " + f.noun() + ", " + f.verb() + " Without " + f.noun() + " - Join the " +
                        f.noun() + ".";
      }
    case Mode::refine:
      switch (rng.pick(3)) {
        case 0: return f.verb() + " " + f.noun() + ". " + f.verb() + " " + f.noun() + ".";
        case 1: return f.adj() + ", Yet " + f.adj() + ".";
        default: return f.noun() + " Meets " + f.noun();
      }
  }
  return "Create Boldly";
}

std::string decorate(Rng& rng, std::string core, Mode mode) {
  const double p = mode == Mode::refine ? 0.15 : 0.35;
  if (rng.chance(p)) {
    const std::string prefix = rng.choice(kPrefixes);
    const bool quoted = !prefix.empty() && prefix.back() == '"';
    core = prefix + core + (quoted ? "\"" : "");
  }
  if (rng.chance(0.2)) core += "\nExplanation: This slogan captures the theme with vivid imagery.";
  return core;
}

}  // namespace

std::string make_png(std::uint8_t r, std::uint8_t g, std::uint8_t b,
                     const std::vector<std::pair<std::string, std::string>>& text_chunks) {
  auto be32 = [](std::uint32_t v) {
    std::string s(4, '\0');
    s[0] = static_cast<char>(v >> 24);
    s[1] = static_cast<char>(v >> 16);
    s[2] = static_cast<char>(v >> 8);
    s[3] = static_cast<char>(v);
    return s;
  };
  auto chunk = [&](std::string_view type, const std::string& data) {
    std::string body = std::string(type) + data;
    const auto crc = static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));
    return be32(static_cast<std::uint32_t>(data.size())) + body + be32(crc);
  };
  std::string png("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr = be32(1) + be32(1);
  ihdr += std::string("\x08\x02\x00\x00\x00", 5);  // 8-bit RGB, no interlace
  png += chunk("IHDR", ihdr);
  for (const auto& [key, value] : text_chunks) png += chunk("tEXt", key + std::string(1, '\0') + value);
  const std::array<Bytef, 4> raw{0, r, g, b};  // filter byte + one pixel
  uLongf zlen = compressBound(raw.size());
  std::string z(zlen, '\0');
  if (compress2(reinterpret_cast<Bytef*>(z.data()), &zlen, raw.data(), raw.size(), 9) != Z_OK) {
    throw Error(ErrorCode::storage, "zlib compression failed");
  }
  z.resize(zlen);
  png += chunk("IDAT", z);
  png += chunk("IEND", "");
  return png;
}

std::vector<RawGeneration> MockTextBackend::complete(const GenerationRequest& request) {
  const auto view = read_prompt(request);
  const double temp = request.profile.temperature;
  std::vector<RawGeneration> out;
  for (int i = 0; i < request.profile.variants; ++i) {
    Rng rng(text::mix_hash(text::mix_hash(seed_, request.seed), static_cast<std::uint64_t>(i)));
    RawGeneration g;
    g.text = decorate(rng, assemble(rng, view, temp), view.mode);
    std::vector<std::pair<std::string, double>> lps;
    std::size_t start = 0;
    const std::string& t = g.text;
    while (start < t.size()) {
      while (start < t.size() && (t[start] == ' ' || t[start] == '\n')) ++start;
      if (start >= t.size()) break;
      auto end = t.find_first_of(" \n", start);
      if (end == std::string::npos) end = t.size();
      std::string tok = t.substr(start, end - start);
      const auto norm = text::normalize_tokens(tok);
      const bool odd = !norm.empty() && surreal_set().count(norm.front()) > 0;
      double lp = -(0.15 + 1.6 * temp * (0.3 + 1.4 * rng.uniform()) + (odd ? 1.5 * temp : 0.0));
      lps.emplace_back(std::move(tok), lp);
      start = end;
    }
    g.token_logprobs = std::move(lps);
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<double> MockEmbeddingBackend::token_vector(const std::string& token) const {
  Rng rng(text::mix_hash(seed_, text::fnv1a(token)));
  std::vector<double> v(dim_);
  double n2 = 0.0;
  for (auto& x : v) {
    x = 2.0 * rng.uniform() - 1.0;
    n2 += x * x;
  }
  const double n = std::sqrt(n2);
  for (auto& x : v) x /= n;
  return v;
}

std::vector<double> MockEmbeddingBackend::embed(const std::string& text) {
  auto tokens = text::normalize_tokens(text);
  if (tokens.empty()) return token_vector(text);
  std::vector<double> sum(dim_, 0.0);
  for (const auto& t : tokens) {
    const auto v = token_vector(t);
    for (std::size_t i = 0; i < dim_; ++i) sum[i] += v[i];
  }
  double n2 = 0.0;
  for (double x : sum) n2 += x * x;
  if (n2 == 0.0) return token_vector(text);
  const double n = std::sqrt(n2);
  for (auto& x : sum) x /= n;
  return sum;
}

std::vector<std::pair<std::string, std::vector<double>>> MockEmbeddingBackend::embed_tokens(const std::string& text) {
  if (!token_embeddings_) return EmbeddingBackend::embed_tokens(text);
  auto tokens = text::normalize_tokens(text);
  if (tokens.empty()) tokens.push_back(text);
  std::vector<std::pair<std::string, std::vector<double>>> out;
  for (auto& t : tokens) {
    auto v = token_vector(t);
    out.emplace_back(std::move(t), std::move(v));
  }
  return out;
}

ImageArtifact MockImageBackend::generate(const std::string& prompt) {
  const auto h = text::mix_hash(seed_, text::fnv1a(prompt));
  ImageArtifact a;
  a.image_bytes = make_png(static_cast<std::uint8_t>(h), static_cast<std::uint8_t>(h >> 8),
                           static_cast<std::uint8_t>(h >> 16), {{"prompt", prompt}});
  a.format = "png";
  a.prompt_used = prompt;
  a.backend_id = id();
  return a;
}

double MockImageTextBackend::similarity(const ImageArtifact& image, const std::string& text) {
  Rng rng(text::mix_hash(text::mix_hash(seed_, text::fnv1a(image.image_bytes)), text::fnv1a(text)));
  return 0.15 + 0.2 * rng.uniform();
}

std::string MockCaptionBackend::caption(const ImageArtifact& image) {
  static constexpr std::array kSubjects{"a woman", "a futuristic car", "a glowing forest", "a garden", "an abstract painting",
                                        "a city skyline"};
  static constexpr std::array kDetails{"with bright colors", "under neon lights", "with many circles", "at sunrise",
                                       "with butterflies", "over water"};
  Rng rng(text::fnv1a(image.image_bytes));
  return std::string(rng.choice(kSubjects)) + " " + rng.choice(kDetails);
}

std::vector<RawGeneration> RecordingTextBackend::complete(const GenerationRequest& request) {
  {
    std::lock_guard lock(mu_);
    requests_.push_back(request);
  }
  return inner_->complete(request);
}

std::vector<GenerationRequest> RecordingTextBackend::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

Backends make_mock_backends(std::uint64_t seed, bool token_embeddings, bool crossmodal) {
  Backends b;
  b.text = std::make_shared<MockTextBackend>(seed);
  b.embedding = std::make_shared<MockEmbeddingBackend>(seed, 64, token_embeddings);
  if (crossmodal) {
    b.image = std::make_shared<MockImageBackend>(seed);
    b.image_text = std::make_shared<MockImageTextBackend>(seed);
    b.caption = std::make_shared<MockCaptionBackend>();
  }
  return b;
}

}  // namespace earth::gateway
