#include "cfsteer/metrics.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "cfsteer/error.hpp"

namespace cfsteer {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }
bool is_clause_break(char c) { return c == ',' || c == ';' || c == ':' || c == '.' || c == '!' || c == '?'; }

std::vector<std::string_view> words(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    std::string_view w = text.substr(i, j - i);
    while (!w.empty() && is_punct(w.front()) && w.front() != '\'') w.remove_prefix(1);
    while (!w.empty() && is_punct(w.back())) w.remove_suffix(1);
    if (!w.empty()) out.push_back(w);
    i = j;
  }
  return out;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

bool is_single_cue(std::string_view w) {
  return w == "not" || w == "never" || ends_with(w, "n't") || ends_with(w, "n\xE2\x80\x99t");
}

bool window_has_cue(std::span<const std::string_view> window) {
  for (std::size_t i = 0; i < window.size(); ++i) {
    if (is_single_cue(window[i])) return true;
    if (window[i] == "no" && i + 1 < window.size() && window[i + 1] == "longer") return true;
  }
  return false;
}

bool clause_opens_with_cue(std::string_view prefix) {
  std::size_t cut = 0;
  for (std::size_t i = prefix.size(); i > 0; --i) {
    if (is_clause_break(prefix[i - 1])) {
      cut = i;
      break;
    }
  }
  if (cut == 0) return false;  // no clause boundary: the window rule covers it
  const auto clause = words(prefix.substr(cut));
  if (clause.empty()) return false;
  if (is_single_cue(clause.front())) return true;
  return clause.size() >= 2 && clause[0] == "no" && clause[1] == "longer";
}

bool occurrence_negated(std::string_view normalized, std::size_t start) {
  const std::string_view prefix = normalized.substr(0, start);
  const auto prefix_words = words(prefix);
  constexpr std::size_t kWindow = 5;
  const std::size_t from = prefix_words.size() > kWindow ? prefix_words.size() - kWindow : 0;
  if (window_has_cue(std::span(prefix_words).subspan(from))) return true;
  return clause_opens_with_cue(prefix);
}

}  // namespace

std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  std::size_t b = 0, e = out.size();
  while (b < e && (is_punct(out[b]) || is_space(out[b]))) ++b;
  while (e > b && (is_punct(out[e - 1]) || is_space(out[e - 1]))) --e;
  return out.substr(b, e - b);
}

bool contains_answer(std::string_view response, std::string_view answer) {
  const std::string a = normalize_text(answer);
  if (a.empty()) throw InvalidArgument("contains_answer: empty answer");
  return normalize_text(response).find(a) != std::string::npos;
}

bool contains_affirmed_answer(std::string_view response, std::string_view answer) {
  const std::string a = normalize_text(answer);
  if (a.empty()) throw InvalidArgument("contains_answer: empty answer");
  const std::string r = normalize_text(response);
  for (std::size_t pos = r.find(a); pos != std::string::npos; pos = r.find(a, pos + 1)) {
    if (!occurrence_negated(r, pos)) return true;
  }
  return false;
}

ExampleScore score_example(std::string_view response, const ConflictExample& ex) {
  ExampleScore s;
  s.hit_s = contains_affirmed_answer(response, ex.substituted_answer);
  s.hit_o = contains_answer(response, ex.original_answer);
  return s;
}

double llr(std::span<const TokenId> tokens) {
  constexpr std::array<double, 3> kWeights = {0.5, 0.3, 0.2};
  const std::size_t n = tokens.size();
  double total = 0.0;
  for (std::size_t k = 1; k <= 3; ++k) {
    if (n < 2 * k) continue;
    const std::size_t windows = n - 2 * k + 1;
    std::size_t repeats = 0;
    for (std::size_t i = 0; i < windows; ++i) {
      if (std::equal(tokens.begin() + i, tokens.begin() + i + k, tokens.begin() + i + k)) ++repeats;
    }
    total += kWeights[k - 1] * static_cast<double>(repeats) / static_cast<double>(windows);
  }
  return total;
}

std::optional<double> memorization_ratio(double p_s, double p_o) {
  if (p_s + p_o <= 0.0) return std::nullopt;
  return 100.0 * p_o / (p_o + p_s);
}

EvalReport aggregate(std::span<const ExampleScore> scores, double llr_threshold) {
  if (scores.empty()) throw InvalidArgument("aggregate needs at least one score");
  EvalReport r;
  r.n = scores.size();
  std::size_t hits_s = 0, hits_o = 0, exceed = 0;
  double llr_sum = 0.0, tokens_sum = 0.0, seconds_sum = 0.0;
  for (const auto& s : scores) {
    hits_s += s.hit_s;
    hits_o += s.hit_o;
    exceed += s.llr > llr_threshold;
    llr_sum += s.llr;
    tokens_sum += static_cast<double>(s.decode.output_token_count);
    seconds_sum += s.decode.decode_seconds;
  }
  const double n = static_cast<double>(r.n);
  r.p_s = 100.0 * static_cast<double>(hits_s) / n;
  r.p_o = 100.0 * static_cast<double>(hits_o) / n;
  r.m_r = memorization_ratio(r.p_s, r.p_o);
  r.mean_llr = llr_sum / n;
  r.llr_exceed_frac = static_cast<double>(exceed) / n;
  r.mean_output_tokens = tokens_sum / n;
  r.mean_decode_seconds = seconds_sum / n;
  return r;
}

}  // namespace cfsteer
