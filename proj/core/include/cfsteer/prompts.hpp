#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cfsteer {

enum class Hops : std::uint8_t { kQA, kMR, kMC };

std::string_view to_string(Hops hops);
Hops parse_hops(std::string_view text);  // throws InvalidArgument

/// One knowledge-conflict record: the context supports `substituted_answer`,
/// while the model's memorized answer is `original_answer`.
struct ConflictExample {
  std::string id;
  std::string question;
  std::string context;
  std::string original_answer;
  std::string substituted_answer;
  Hops hops = Hops::kQA;

  /// Throws InvalidArgument on empty fields or identical answers.
  void validate() const;

  friend bool operator==(const ConflictExample&, const ConflictExample&) = default;
};

/// Paraphrases of the context-grounding system instruction.
class SystemPromptSet {
 public:
  /// Throws InvalidArgument when empty, when a variant is blank, or when two
  /// variants coincide.
  explicit SystemPromptSet(std::vector<std::string> variants);

  /// The 20 variants shipped with the library.
  static SystemPromptSet builtin();

  /// One variant per line; blank lines and lines starting with '#' are skipped.
  static SystemPromptSet load(const std::filesystem::path& path);

  const std::vector<std::string>& variants() const { return variants_; }
  std::size_t size() const { return variants_.size(); }

 private:
  std::vector<std::string> variants_;
};

/// Uniform draw; reproducible for a given engine state.
const std::string& sample_variant(const SystemPromptSet& set, std::mt19937_64& rng);

enum class PromptKind : std::uint8_t {
  kPositive,         // system + context + question
  kNegative,         // question only
  kContextQuestion,  // context + question, no system instruction
  kOpen,
  kOpenOI,
  kOptionsPositive,
  kOptionsNegative,
};

struct RenderedPrompt {
  std::string text;
  PromptKind kind;
  std::size_t last_input_marker = 0;  // byte offset of the end of the prompt
};

inline constexpr std::string_view kInstOpen = "[INST]\n";
inline constexpr std::string_view kInstClose = "[/INST]";

inline constexpr std::string_view kOpenSystemPrompt =
    "You are a Contextual QA Assistant.\n"
    "Please answer the following question according to the given context.\n"
    "Please restrict your response to one sentence.\n";

RenderedPrompt render_positive(const ConflictExample& ex, std::string_view system_variant);
RenderedPrompt render_negative(const ConflictExample& ex);
RenderedPrompt render_context_question(const ConflictExample& ex);
RenderedPrompt render_open(const ConflictExample& ex, bool opinion_and_instruction);

enum class OptionLetter : std::uint8_t { kA, kB };

/// Multiple-choice prompt pair. `context_letter` names the option carrying the
/// substituted answer; the positive prompt ends with that letter, the negative
/// with the other. Both share every byte but the last.
std::pair<RenderedPrompt, RenderedPrompt> render_options(const ConflictExample& ex, OptionLetter context_letter);

}  // namespace cfsteer
