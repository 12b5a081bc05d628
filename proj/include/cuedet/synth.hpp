#pragma once

#include <map>

#include "cuedet/data.hpp"

namespace cuedet {

// Synthetic corpora for desk-scale experiments.
//
// Labels follow cue INTENSITY: hateful records carry a strong charge of
// shared cue tokens (2-3 aggression/negative-polarity words), while a slice
// of the non-hateful records are hard negatives with exactly one cue word
// (criticism is not hate). Each platform additionally owns "spurious" marker
// tokens that align with the label in-platform and anti-align on every other
// platform. A detector that leans on the markers looks strong in-platform
// and flips on the borderline cases off-platform; the cue-intensity signal
// transfers unchanged.
struct ShiftKnobs {
  double spur_include = 0.95;      // chance a record carries its own-platform marker
  double spur_strength = 0.9;      // chance that marker aligns with the label
  double foreign_include = 0.8;    // chance a record carries another platform's marker
  double foreign_anti = 0.9;       // chance that foreign marker anti-aligns
  double pos_rate = 0.15;          // chance a plain non-hateful record gets a positive token
  double hard_negative_rate = 0.35;  // slice of non-hate records carrying one cue token
  double implicit_rate = 0.25;     // slice of hateful records with a single cue token
  double third_cue = 0.4;          // chance an explicit hateful record gets a third cue
  int filler_min = 8;              // near-constant length keeps the CLS attention
  int filler_max = 10;             // filler share comparable across examples
  double label_noise = 0.0;        // annotation-noise rate on the emitted labels
  double hateful_fraction = 0.35;  // class mix, shaped like the real corpora
};

// 3-class sentiment corpus (0=negative, 1=neutral, 2=positive). Polarity
// tokens decide the label; aggression and spurious tokens appear as
// label-neutral filler so the encoder learns to ignore them.
Corpus gen_sentiment_corpus(int n, std::uint64_t seed);

// Binary aggression corpus (1 = aggressive). Same cross-exposure scheme.
Corpus gen_aggression_corpus(int n, std::uint64_t seed);

// Fully separable hate corpus: hateful iff the text carries a cue token.
// No spurious markers, no label noise.
Corpus gen_separable_corpus(int n, std::uint64_t seed,
                            const std::string& platform = "synth");

// One corpus per platform with the spurious-marker shift described above.
// Hateful records carry hate_target/hate_type metadata.
std::map<std::string, Corpus> gen_shift_suite(const std::vector<std::string>& platforms,
                                              int n_per_platform, std::uint64_t seed,
                                              const ShiftKnobs& knobs = {});

// Single-platform corpus where every record belongs to one of two hate
// targets; target-specific spurious markers anti-align across targets.
Corpus gen_two_target_corpus(int n, std::uint64_t seed,
                             const std::string& target_a = "groupA",
                             const std::string& target_b = "groupB");

// One sentence with exactly one planted cue token among neutral filler.
// planted_pos indexes the tokenized sequence (position 0 is [CLS]).
struct ProbeSentence {
  std::string text;
  std::string planted_token;
  int planted_pos = 0;
};

std::vector<ProbeSentence> gen_polarity_probes(int n, std::uint64_t seed);
std::vector<ProbeSentence> gen_aggression_probes(int n, std::uint64_t seed);

const std::vector<std::string>& positive_pool();
const std::vector<std::string>& negative_pool();
const std::vector<std::string>& aggression_pool();

}  // namespace cuedet
