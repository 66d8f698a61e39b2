#include "cfsteer/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "binary_io.hpp"
#include "cfsteer/error.hpp"

namespace cfsteer {
namespace {

using nlohmann::json;

constexpr std::string_view kVectorMagic = "CFSV";

std::string required_string(const json& record, const char* field, std::size_t line) {
  const auto it = record.find(field);
  if (it == record.end()) {
    throw ParseError(line, field, "line " + std::to_string(line) + ": missing field \"" + field + "\"");
  }
  if (!it->is_string()) {
    throw ParseError(line, field, "line " + std::to_string(line) + ": field \"" + field + "\" must be a string");
  }
  return it->get<std::string>();
}

}  // namespace

std::vector<ConflictExample> parse_dataset(std::string_view text) {
  std::vector<ConflictExample> out;
  std::unordered_set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }

    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, "", "line " + std::to_string(line_no) + ": malformed record: " + e.what());
    }
    if (!record.is_object()) throw ParseError(line_no, "", "line " + std::to_string(line_no) + ": not an object");

    ConflictExample ex;
    ex.id = required_string(record, "id", line_no);
    ex.question = required_string(record, "question", line_no);
    ex.context = required_string(record, "context", line_no);
    ex.original_answer = required_string(record, "original_answer", line_no);
    ex.substituted_answer = required_string(record, "substituted_answer", line_no);
    const std::string hops = required_string(record, "hops", line_no);
    try {
      ex.hops = parse_hops(hops);
      ex.validate();
    } catch (const InvalidArgument& e) {
      throw ParseError(line_no, "", "line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!ids.insert(ex.id).second) {
      throw ParseError(line_no, "id", "line " + std::to_string(line_no) + ": duplicate id \"" + ex.id + "\"");
    }
    out.push_back(std::move(ex));
    if (end == text.size()) break;
  }
  if (out.empty()) throw ParseError(0, "", "dataset is empty");
  return out;
}

std::vector<ConflictExample> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open dataset " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str());
}

void save_dataset(std::span<const ConflictExample> examples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write dataset " + path.string());
  for (const auto& ex : examples) {
    json record = {{"id", ex.id},
                   {"question", ex.question},
                   {"context", ex.context},
                   {"original_answer", ex.original_answer},
                   {"substituted_answer", ex.substituted_answer},
                   {"hops", std::string(to_string(ex.hops))}};
    out << record.dump() << '\n';
  }
}

DatasetSplit split(std::span<const ConflictExample> examples, std::uint64_t seed, std::size_t n_train,
                   std::size_t n_select, std::size_t n_eval) {
  if (n_train + n_select + n_eval > examples.size()) {
    throw InvalidArgument("split of " + std::to_string(n_train) + "+" + std::to_string(n_select) + "+" +
                          std::to_string(n_eval) + " needs more than the " + std::to_string(examples.size()) +
                          " available examples");
  }
  std::vector<std::string> ids;
  ids.reserve(examples.size());
  for (const auto& ex : examples) ids.push_back(ex.id);
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);

  DatasetSplit s;
  s.seed = seed;
  auto it = ids.begin();
  s.train_ids.assign(it, it + static_cast<std::ptrdiff_t>(n_train));
  it += static_cast<std::ptrdiff_t>(n_train);
  s.select_ids.assign(it, it + static_cast<std::ptrdiff_t>(n_select));
  it += static_cast<std::ptrdiff_t>(n_select);
  s.eval_ids.assign(it, it + static_cast<std::ptrdiff_t>(n_eval));
  return s;
}

std::vector<ConflictExample> select_examples(std::span<const ConflictExample> examples,
                                             std::span<const std::string> ids) {
  std::unordered_map<std::string_view, const ConflictExample*> by_id;
  for (const auto& ex : examples) by_id.emplace(ex.id, &ex);
  std::vector<ConflictExample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw InvalidArgument("unknown example id \"" + id + "\"");
    out.push_back(*it->second);
  }
  return out;
}

void save_vector(const SteeringVector& vector, const std::filesystem::path& path) {
  detail::ByteWriter out;
  out.raw(kVectorMagic);
  out.u32(kVectorFileVersion);
  out.u32(static_cast<std::uint32_t>(vector.layer()));
  out.u32(static_cast<std::uint32_t>(vector.dimension()));
  out.u64(vector.sample_count());
  out.u8(static_cast<std::uint8_t>(vector.scheme()));
  out.bytes(vector.source_hash());
  out.f32s(vector.values());
  detail::seal(out);
  detail::write_file(path, out.data());
}

SteeringVector load_vector(const std::filesystem::path& path) {
  const auto file = detail::read_file(path);
  const std::string what = "vector file " + path.string();
  auto in = detail::open_checked(file, kVectorMagic, kVectorFileVersion, what);
  const std::uint32_t layer = in.u32();
  const std::uint32_t dim = in.u32();
  const std::uint64_t sample_count = in.u64();
  const std::uint8_t scheme = in.u8();
  if (scheme > static_cast<std::uint8_t>(Scheme::kOptions)) {
    throw FormatError(FormatError::Kind::kInvalidField, what + ": unknown scheme code " + std::to_string(scheme));
  }
  SourceHash hash{};
  const auto h = in.take(hash.size());
  std::copy(h.begin(), h.end(), hash.begin());
  if (in.remaining() != static_cast<std::uint64_t>(dim) * 4) {
    throw FormatError(FormatError::Kind::kTruncated, what + ": payload has " + std::to_string(in.remaining()) +
                                                         " bytes, header declares dimension " + std::to_string(dim));
  }
  std::vector<float> values(dim);
  in.f32s(values);
  try {
    return SteeringVector(layer, std::move(values), sample_count, static_cast<Scheme>(scheme), hash);
  } catch (const InvalidArgument& e) {
    throw FormatError(FormatError::Kind::kInvalidField, what + ": " + e.what());
  }
}

}  // namespace cfsteer
