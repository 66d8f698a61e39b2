#include "cfsteer/prompts.hpp"

#include <fstream>
#include <set>

#include "cfsteer/error.hpp"

namespace cfsteer {
namespace {

RenderedPrompt make(std::string text, PromptKind kind) {
  const std::size_t end = text.size();
  return {std::move(text), kind, end};
}

// Keep in sync with data/system_prompts.txt (checked by the tests).
const char* const kBuiltinVariants[] = {
    "You are a context-based QA assistant and must answer based on the provided context.",
    "As a QA assistant, you are instructed to refer only to the provided context when answering.",
    "Provide answers based solely on the context you are given.",
    "You are a QA assistant and must restrict your answers to the given context.",
    "Answer every question using only the information in the supplied context.",
    "Rely exclusively on the given context when you respond to the question.",
    "Your answers must be grounded entirely in the context provided to you.",
    "Use the provided passage as your only source of truth when answering.",
    "Base your response strictly on the context, even if it contradicts what you know.",
    "You are a retrieval-grounded assistant; answer only from the given context.",
    "Treat the supplied context as authoritative and answer according to it.",
    "When answering, consult only the context that accompanies the question.",
    "Respond to the question using nothing but the facts stated in the context.",
    "As an assistant, you must derive your answer from the given context alone.",
    "Do not use outside knowledge; answer based on the provided context.",
    "The context below is correct. Answer the question according to it.",
    "You answer questions faithfully to the context you are shown.",
    "Follow the given context when answering, and ignore prior beliefs.",
    "Ground your answer in the provided context and nothing else.",
    "Read the context carefully and answer strictly as it states.",
};

}  // namespace

std::string_view to_string(Hops hops) {
  switch (hops) {
    case Hops::kQA:
      return "QA";
    case Hops::kMR:
      return "MR";
    case Hops::kMC:
      return "MC";
  }
  return "QA";
}

Hops parse_hops(std::string_view text) {
  if (text == "QA") return Hops::kQA;
  if (text == "MR") return Hops::kMR;
  if (text == "MC") return Hops::kMC;
  throw InvalidArgument("unknown hops tag \"" + std::string(text) + "\" (expected QA, MR or MC)");
}

void ConflictExample::validate() const {
  if (id.empty()) throw InvalidArgument("example has an empty id");
  if (question.empty()) throw InvalidArgument("example " + id + ": empty question");
  if (context.empty()) throw InvalidArgument("example " + id + ": empty context");
  if (original_answer.empty()) throw InvalidArgument("example " + id + ": empty original_answer");
  if (substituted_answer.empty()) throw InvalidArgument("example " + id + ": empty substituted_answer");
  if (original_answer == substituted_answer) throw InvalidArgument("example " + id + ": answers are identical");
}

SystemPromptSet::SystemPromptSet(std::vector<std::string> variants) : variants_(std::move(variants)) {
  if (variants_.empty()) throw InvalidArgument("system prompt set is empty");
  std::set<std::string_view> seen;
  for (const auto& v : variants_) {
    if (v.find_first_not_of(" \t\r\n") == std::string::npos) throw InvalidArgument("blank system prompt variant");
    if (!seen.insert(v).second) throw InvalidArgument("duplicate system prompt variant: " + v);
  }
}

SystemPromptSet SystemPromptSet::builtin() {
  return SystemPromptSet(std::vector<std::string>(std::begin(kBuiltinVariants), std::end(kBuiltinVariants)));
}

SystemPromptSet SystemPromptSet::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open system prompt file " + path.string());
  std::vector<std::string> variants;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    variants.push_back(line);
  }
  return SystemPromptSet(std::move(variants));
}

const std::string& sample_variant(const SystemPromptSet& set, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, set.size() - 1);
  return set.variants()[pick(rng)];
}

RenderedPrompt render_positive(const ConflictExample& ex, std::string_view system_variant) {
  std::string text(kInstOpen);
  text.append(system_variant).append("\n");
  text.append("Context: ").append(ex.context).append("\n");
  text.append("Question: ").append(ex.question).append("\n");
  text.append(kInstClose);
  return make(std::move(text), PromptKind::kPositive);
}

RenderedPrompt render_negative(const ConflictExample& ex) {
  std::string text(kInstOpen);
  text.append("Question: ").append(ex.question).append("\n");
  text.append(kInstClose);
  return make(std::move(text), PromptKind::kNegative);
}

RenderedPrompt render_context_question(const ConflictExample& ex) {
  std::string text(kInstOpen);
  text.append("Context: ").append(ex.context).append("\n");
  text.append("Question: ").append(ex.question).append("\n");
  text.append(kInstClose);
  return make(std::move(text), PromptKind::kContextQuestion);
}

RenderedPrompt render_open(const ConflictExample& ex, bool opinion_and_instruction) {
  std::string text(kInstOpen);
  text.append(kOpenSystemPrompt);
  if (opinion_and_instruction) {
    text.append("Bob said, \"").append(ex.context).append("\".\n");
    text.append(ex.question).append(" in Bob's opinion?\n");
  } else {
    text.append(ex.context).append("\n");
    text.append(ex.question).append("\n");
  }
  text.append(kInstClose);
  return make(std::move(text), opinion_and_instruction ? PromptKind::kOpenOI : PromptKind::kOpen);
}

std::pair<RenderedPrompt, RenderedPrompt> render_options(const ConflictExample& ex, OptionLetter context_letter) {
  const std::string context_option = "According to the context, the answer is " + ex.substituted_answer + ".";
  const std::string memory_option = "Notwithstanding the context, the answer is " + ex.original_answer + ".";
  const bool a_is_context = context_letter == OptionLetter::kA;

  std::string body(kInstOpen);
  body.append("Context: ").append(ex.context).append("\n");
  body.append("Question: ").append(ex.question).append("\n");
  body.append("Options:\n");
  body.append("(A) ").append(a_is_context ? context_option : memory_option).append("\n");
  body.append("(B) ").append(a_is_context ? memory_option : context_option).append("\n");
  body.append(kInstClose).append(" (");

  const char pos_letter = a_is_context ? 'A' : 'B';
  const char neg_letter = a_is_context ? 'B' : 'A';
  return {make(body + pos_letter, PromptKind::kOptionsPositive), make(body + neg_letter, PromptKind::kOptionsNegative)};
}

}  // namespace cfsteer
