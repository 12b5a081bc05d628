#include "cuedet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cuedet/vocab.hpp"

namespace cuedet {

namespace {

const std::vector<std::string> kPositive = {
    "bright", "joy", "delight", "praise", "cheer", "warm",
    "gentle", "hope", "smile",  "kindly", "charm", "uplift"};
const std::vector<std::string> kNegative = {
    "vile",  "rotten",   "misery", "disgust", "gloom", "dread",
    "filth", "wretched", "bitter", "sour",    "bleak", "grim"};
const std::vector<std::string> kAggression = {
    "smash", "crush", "attack", "destroy", "threat", "strike",
    "slam",  "wreck", "stomp",  "pummel",  "raid",   "batter"};
const std::vector<std::string> kFiller = {
    "report",  "window",  "river",   "market",  "signal",  "paper",   "garden",  "street",
    "coffee",  "music",   "travel",  "photo",   "update",  "thread",  "detail",  "engine",
    "planet",  "bridge",  "cloud",   "stone",   "meadow",  "ticket",  "lantern", "harbor",
    "pencil",  "bottle",  "ladder",  "carpet",  "mirror",  "basket",  "candle",  "saddle",
    "marble",  "button",  "jacket",  "pillow",  "magnet",  "turbine", "valley",  "canyon",
    "orchard", "library", "station", "gallery", "journal", "compass", "anchor",  "tunnel"};

struct MarkerPool {
  std::vector<std::string> hate;
  std::vector<std::string> non_hate;
};

const std::map<std::string, MarkerPool>& platform_markers() {
  static const std::map<std::string, MarkerPool> pools = {
      {"alpha", {{"zorp", "flib", "quxon"}, {"blim", "vren", "tosk"}}},
      {"beta", {{"snek", "drup", "molg"}, {"plif", "tronx", "quil"}}},
      {"gamma", {{"krag", "zund", "brop"}, {"felm", "dask", "yorn"}}},
      {"delta", {{"wunk", "sprel", "gax"}, {"nilf", "corm", "pib"}}},
  };
  return pools;
}

const std::map<std::string, MarkerPool>& target_markers() {
  static const std::map<std::string, MarkerPool> pools = {
      {"groupA", {{"jorv", "lunt"}, {"pell", "mirt"}}},
      {"groupB", {{"gruk", "vosk"}, {"timn", "harl"}}},
  };
  return pools;
}

const std::map<std::string, std::vector<std::string>>& target_topics() {
  static const std::map<std::string, std::vector<std::string>> topics = {
      {"groupA", {"border", "caravan", "visa"}},
      {"groupB", {"parade", "banner", "anthem"}},
  };
  return topics;
}

const std::string& pick(const std::vector<std::string>& pool, Rng& rng) {
  std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
  return pool[d(rng)];
}

bool flip(Rng& rng, double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

std::vector<std::string> filler_sentence(Rng& rng, int min_len, int max_len) {
  std::uniform_int_distribution<int> len(min_len, max_len);
  const int n = len(rng);
  std::vector<std::string> toks;
  toks.reserve(static_cast<std::size_t>(n) + 6);
  for (int i = 0; i < n; ++i) toks.push_back(pick(kFiller, rng));
  return toks;
}

void insert_at_random(std::vector<std::string>& toks, const std::string& tok, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pos(0, toks.size());
  toks.insert(toks.begin() + static_cast<std::ptrdiff_t>(pos(rng)), tok);
}

std::string join(const std::vector<std::string>& toks) {
  std::ostringstream os;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) os << ' ';
    os << toks[i];
  }
  return os.str();
}

// A random marker token from any platform pool, used as label-neutral filler
// in the cue corpora so the cue encoders see them during pretraining.
std::string random_marker(Rng& rng) {
  std::vector<const MarkerPool*> pools;
  for (const auto& entry : platform_markers()) pools.push_back(&entry.second);
  for (const auto& entry : target_markers()) pools.push_back(&entry.second);
  std::uniform_int_distribution<std::size_t> d(0, pools.size() - 1);
  const MarkerPool* p = pools[d(rng)];
  return flip(rng, 0.5) ? pick(p->hate, rng) : pick(p->non_hate, rng);
}

}  // namespace

const std::vector<std::string>& positive_pool() { return kPositive; }
const std::vector<std::string>& negative_pool() { return kNegative; }
const std::vector<std::string>& aggression_pool() { return kAggression; }

Corpus gen_sentiment_corpus(int n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  Corpus c;
  c.platform = "synthetic-sentiment";
  c.provenance = "synthetic:sentiment#" + std::to_string(seed);
  c.n_classes = 3;
  for (int i = 0; i < n; ++i) {
    const int label = i % 3;  // 0=negative, 1=neutral, 2=positive
    auto toks = filler_sentence(rng, 5, 10);
    if (label == 0) {
      insert_at_random(toks, pick(kNegative, rng), rng);
      if (flip(rng, 0.4)) insert_at_random(toks, pick(kNegative, rng), rng);
    } else if (label == 2) {
      insert_at_random(toks, pick(kPositive, rng), rng);
      if (flip(rng, 0.4)) insert_at_random(toks, pick(kPositive, rng), rng);
    }
    if (flip(rng, 0.3)) insert_at_random(toks, pick(kAggression, rng), rng);
    if (flip(rng, 0.3)) insert_at_random(toks, random_marker(rng), rng);
    Record r;
    r.text = join(toks);
    r.label = label;
    r.platform = c.platform;
    c.records.push_back(std::move(r));
  }
  return c;
}

Corpus gen_aggression_corpus(int n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  Corpus c;
  c.platform = "synthetic-aggression";
  c.provenance = "synthetic:aggression#" + std::to_string(seed);
  c.n_classes = 2;
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    auto toks = filler_sentence(rng, 5, 10);
    if (label == 1) {
      insert_at_random(toks, pick(kAggression, rng), rng);
      if (flip(rng, 0.4)) insert_at_random(toks, pick(kAggression, rng), rng);
    }
    if (flip(rng, 0.3)) {
      insert_at_random(toks, flip(rng, 0.5) ? pick(kPositive, rng) : pick(kNegative, rng), rng);
    }
    if (flip(rng, 0.3)) insert_at_random(toks, random_marker(rng), rng);
    Record r;
    r.text = join(toks);
    r.label = label;
    r.platform = c.platform;
    c.records.push_back(std::move(r));
  }
  return c;
}

namespace {

// Core hate-record builder shared by the separable, shift, and two-target
// generators. Hateful records carry 2-3 cue tokens; hard-negative records
// carry exactly one; plain negatives carry none.
Record make_hate_record(Rng& rng, bool hateful, const ShiftKnobs& knobs,
                        bool with_metadata) {
  auto toks = filler_sentence(rng, knobs.filler_min, knobs.filler_max);
  Record r;
  r.label = hateful ? 1 : 0;
  if (hateful) {
    // the implicit slice expresses hate without piling up overt cue tokens
    const int n_cues = flip(rng, knobs.implicit_rate) ? 1 : 2 + (flip(rng, knobs.third_cue) ? 1 : 0);
    bool has_agg = false;
    for (int i = 0; i < n_cues; ++i) {
      const bool agg = i == 0 ? flip(rng, 0.5) : flip(rng, 0.5);
      if (agg) {
        insert_at_random(toks, pick(kAggression, rng), rng);
        has_agg = true;
      } else {
        insert_at_random(toks, pick(kNegative, rng), rng);
      }
    }
    if (with_metadata) {
      r.hate_type = has_agg ? "violence" : "offensive";
      r.hate_target = flip(rng, 0.5) ? "groupA" : "groupB";
    }
  } else if (flip(rng, knobs.hard_negative_rate)) {
    insert_at_random(toks, flip(rng, 0.5) ? pick(kAggression, rng) : pick(kNegative, rng), rng);
  } else if (flip(rng, knobs.pos_rate)) {
    insert_at_random(toks, pick(kPositive, rng), rng);
  }
  r.text = join(toks);
  return r;
}

void add_marker(std::vector<std::string>& toks, const MarkerPool& pool, bool aligned,
                bool hateful, Rng& rng) {
  const bool use_hate_pool = aligned == hateful;
  insert_at_random(toks, pick(use_hate_pool ? pool.hate : pool.non_hate, rng), rng);
}

}  // namespace

Corpus gen_separable_corpus(int n, std::uint64_t seed, const std::string& platform) {
  Rng rng = make_rng(seed);
  Corpus c;
  c.platform = platform;
  c.provenance = "synthetic:separable#" + std::to_string(seed);
  ShiftKnobs knobs;
  for (int i = 0; i < n; ++i) {
    Record r = make_hate_record(rng, i % 2 == 1, knobs, true);
    r.platform = platform;
    c.records.push_back(std::move(r));
  }
  return c;
}

std::map<std::string, Corpus> gen_shift_suite(const std::vector<std::string>& platforms,
                                              int n_per_platform, std::uint64_t seed,
                                              const ShiftKnobs& knobs) {
  if (platforms.size() < 2) throw validation_error("gen_shift_suite: need >= 2 platforms");
  for (const auto& p : platforms)
    if (!platform_markers().count(p))
      throw validation_error("gen_shift_suite: unknown platform '" + p +
                             "' (have alpha/beta/gamma/delta)");
  std::map<std::string, Corpus> out;
  std::uint64_t salt = 0;
  for (const auto& platform : platforms) {
    Rng rng = make_rng(seed + 0x1000 * ++salt);
    Corpus c;
    c.platform = platform;
    c.provenance = "synthetic:shift:" + platform + "#" + std::to_string(seed);
    const int stripe = std::max(1, static_cast<int>(std::lround(knobs.hateful_fraction * 20)));
    for (int i = 0; i < n_per_platform; ++i) {
      const bool hateful = i % 20 < stripe;
      Record r = make_hate_record(rng, hateful, knobs, true);
      auto toks = split_tokens(r.text);
      if (flip(rng, knobs.spur_include)) {
        add_marker(toks, platform_markers().at(platform), flip(rng, knobs.spur_strength),
                   hateful, rng);
      }
      for (const auto& other : platforms) {
        if (other == platform) continue;
        if (flip(rng, knobs.foreign_include)) {
          add_marker(toks, platform_markers().at(other), !flip(rng, knobs.foreign_anti),
                     hateful, rng);
        }
      }
      r.text = join(toks);
      r.platform = platform;
      if (flip(rng, knobs.label_noise)) r.label = 1 - r.label;
      c.records.push_back(std::move(r));
    }
    out[platform] = std::move(c);
  }
  return out;
}

Corpus gen_two_target_corpus(int n, std::uint64_t seed, const std::string& target_a,
                             const std::string& target_b) {
  Rng rng = make_rng(seed);
  Corpus c;
  c.platform = "synthetic-two-target";
  c.provenance = "synthetic:two-target#" + std::to_string(seed);
  ShiftKnobs knobs;
  const std::vector<std::string> targets = {target_a, target_b};
  for (int i = 0; i < n; ++i) {
    const bool hateful = i % 2 == 1;
    const std::string& target = targets[static_cast<std::size_t>((i / 2) % 2)];
    const std::string& other = target == target_a ? target_b : target_a;
    Record r = make_hate_record(rng, hateful, knobs, false);
    auto toks = split_tokens(r.text);
    const auto& topics = target_topics().count(target) ? target_topics().at(target)
                                                       : std::vector<std::string>{};
    for (int t = 0; t < 2 && !topics.empty(); ++t) insert_at_random(toks, pick(topics, rng), rng);
    if (flip(rng, knobs.spur_include)) {
      add_marker(toks, target_markers().at(target), flip(rng, knobs.spur_strength), hateful, rng);
    }
    if (flip(rng, knobs.foreign_include)) {
      add_marker(toks, target_markers().at(other), !flip(rng, knobs.foreign_anti), hateful, rng);
    }
    r.text = join(toks);
    r.platform = c.platform;
    r.hate_target = target;
    if (hateful) r.hate_type = flip(rng, 0.5) ? "violence" : "offensive";
    c.records.push_back(std::move(r));
  }
  return c;
}

namespace {
std::vector<ProbeSentence> gen_probes(int n, std::uint64_t seed,
                                      const std::vector<std::string>& pool_a,
                                      const std::vector<std::string>* pool_b) {
  Rng rng = make_rng(seed);
  std::vector<ProbeSentence> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto toks = filler_sentence(rng, 7, 11);
    const auto& pool = (pool_b && flip(rng, 0.5)) ? *pool_b : pool_a;
    const std::string tok = pick(pool, rng);
    std::uniform_int_distribution<std::size_t> pos(0, toks.size());
    const std::size_t at = pos(rng);
    toks.insert(toks.begin() + static_cast<std::ptrdiff_t>(at), tok);
    ProbeSentence p;
    p.text = join(toks);
    p.planted_token = tok;
    p.planted_pos = static_cast<int>(at) + 1;  // position 0 is [CLS]
    out.push_back(std::move(p));
  }
  return out;
}
}  // namespace

std::vector<ProbeSentence> gen_polarity_probes(int n, std::uint64_t seed) {
  return gen_probes(n, seed, kNegative, &kPositive);
}

std::vector<ProbeSentence> gen_aggression_probes(int n, std::uint64_t seed) {
  return gen_probes(n, seed, kAggression, nullptr);
}

}  // namespace cuedet
