#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cfsteer/model.hpp"
#include "cfsteer/prompts.hpp"

namespace cfsteer {

/// Lower-cases ASCII, collapses whitespace runs to one space and strips
/// leading/trailing punctuation and whitespace.
std::string normalize_text(std::string_view text);

/// True iff normalize(answer) is a substring of normalize(response).
/// Throws InvalidArgument for an empty answer.
bool contains_answer(std::string_view response, std::string_view answer);

/// True iff some occurrence of the answer in the response is not negated.
/// An occurrence is negated when one of the cues "not", "never", "no longer"
/// or a word ending in "n't" appears among the 5 normalized words before it,
/// or when the clause holding it (text since the last , ; : . ! ?) opens with
/// a cue, as in "X, not the Y".
bool contains_affirmed_answer(std::string_view response, std::string_view answer);

struct ExampleScore {
  bool hit_s = false;  // substituted answer present and not negated
  bool hit_o = false;  // original answer present
  double llr = 0.0;
  DecodeStats decode;
};

ExampleScore score_example(std::string_view response, const ConflictExample& ex);

/// Local loop rate over token ids: 0.5 r1 + 0.3 r2 + 0.2 r3, where r_k is the
/// fraction of start positions whose k-gram is immediately repeated.
double llr(std::span<const TokenId> tokens);

inline constexpr double kDefaultLlrThreshold = 0.05;

struct EvalReport {
  double p_s = 0.0;  // percent
  double p_o = 0.0;  // percent
  std::optional<double> m_r;  // percent; absent when p_s + p_o == 0
  double mean_llr = 0.0;
  double llr_exceed_frac = 0.0;  // fraction with llr > threshold
  double mean_output_tokens = 0.0;
  double mean_decode_seconds = 0.0;
  std::size_t n = 0;
};

/// 100 * p_o / (p_o + p_s); absent when both are zero.
std::optional<double> memorization_ratio(double p_s, double p_o);

EvalReport aggregate(std::span<const ExampleScore> scores, double llr_threshold = kDefaultLlrThreshold);

}  // namespace cfsteer
