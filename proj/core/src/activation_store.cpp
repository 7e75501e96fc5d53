#include "neurules/activation_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "neurules/error.hpp"
#include "neurules/rng.hpp"

namespace neurules {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kMagic = "NLAD";
constexpr int kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xffu));
  out.push_back(static_cast<char>((v >> 8) & 0xffu));
  out.push_back(static_cast<char>((v >> 16) & 0xffu));
  out.push_back(static_cast<char>((v >> 24) & 0xffu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

template <class T>
T header_field(const json& header, const char* key) {
  auto it = header.find(key);
  if (it == header.end()) throw Error(ErrorCode::MalformedHeader, std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::MalformedHeader, std::string("field '") + key + "' has the wrong type");
  }
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void ActivationDump::validate() const {
  if (n < 1 || h < 1) throw Error(ErrorCode::InvariantViolation, "dump needs n >= 1 and h >= 1");
  if (num_classes < 1) throw Error(ErrorCode::InvariantViolation, "num_classes must be >= 1");
  if (values.size() != n * h) throw Error(ErrorCode::InvariantViolation, "values length != n*h");
  if (labels.size() != n) throw Error(ErrorCode::InvariantViolation, "labels length != n");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw Error(ErrorCode::NonFiniteValue,
                  "value at row " + std::to_string(i / h) + ", neuron " + std::to_string(i % h));
    }
  }
  for (auto l : labels) {
    if (l >= num_classes) throw Error(ErrorCode::InvariantViolation, "label >= num_classes");
  }
  if (predictions) {
    if (predictions->size() != n) throw Error(ErrorCode::InvariantViolation, "predictions length != n");
    for (auto p : *predictions) {
      if (p >= num_classes) throw Error(ErrorCode::InvariantViolation, "prediction >= num_classes");
    }
  }
  if (doc_ids && doc_ids->size() != n) throw Error(ErrorCode::InvariantViolation, "doc_ids length != n");
}

std::string encode_activation_dump(const ActivationDump& dump) {
  dump.validate();
  ordered_json header;
  header["magic"] = kMagic;
  header["version"] = kVersion;
  header["layer"] = dump.layer;
  header["n"] = dump.n;
  header["h"] = dump.h;
  header["num_classes"] = dump.num_classes;
  header["has_predictions"] = dump.predictions.has_value();
  header["has_doc_ids"] = dump.doc_ids.has_value();

  std::string out = header.dump();
  out.push_back('\n');
  out.reserve(out.size() + 4 * (dump.values.size() + 2 * dump.n));
  for (float v : dump.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  for (auto l : dump.labels) put_u32(out, l);
  if (dump.predictions) {
    for (auto p : *dump.predictions) put_u32(out, p);
  }
  if (dump.doc_ids) {
    out += json(*dump.doc_ids).dump();
    out.push_back('\n');
  }
  return out;
}

ActivationDump decode_activation_dump(const std::string& bytes) {
  const auto eol = bytes.find('\n');
  if (eol == std::string::npos) throw Error(ErrorCode::MalformedHeader, "no header line");
  json header;
  try {
    header = json::parse(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(eol));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedHeader, e.what());
  }
  if (!header.is_object()) throw Error(ErrorCode::MalformedHeader, "header is not a JSON object");
  auto magic = header.find("magic");
  if (magic == header.end() || !magic->is_string() || magic->get<std::string>() != kMagic) {
    throw Error(ErrorCode::BadMagic, "expected magic \"NLAD\"");
  }
  const int version = header_field<int>(header, "version");
  if (version != kVersion) throw Error(ErrorCode::UnsupportedVersion, "version " + std::to_string(version));

  ActivationDump dump;
  dump.layer = header_field<int>(header, "layer");
  const auto n = header_field<std::int64_t>(header, "n");
  const auto h = header_field<std::int64_t>(header, "h");
  const auto c = header_field<std::int64_t>(header, "num_classes");
  const bool has_pred = header_field<bool>(header, "has_predictions");
  const bool has_ids = header_field<bool>(header, "has_doc_ids");
  if (n < 1 || h < 1 || c < 1 || c > UINT32_MAX) throw Error(ErrorCode::MalformedHeader, "n, h, num_classes must be >= 1");
  dump.n = static_cast<std::size_t>(n);
  dump.h = static_cast<std::size_t>(h);
  dump.num_classes = static_cast<std::uint32_t>(c);

  const std::size_t available = bytes.size() - eol - 1;
  // Guard the multiplication before trusting header sizes.
  if (dump.h > available / 4 || dump.n > available / 4 / dump.h) {
    throw Error(ErrorCode::TruncatedPayload, "payload shorter than n*h floats");
  }
  const std::size_t words = dump.n * dump.h + dump.n * (has_pred ? 2 : 1);
  if (words * 4 > available) {
    throw Error(ErrorCode::TruncatedPayload,
                "need " + std::to_string(words * 4) + " payload bytes, have " + std::to_string(available));
  }

  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + eol + 1;
  dump.values.resize(dump.n * dump.h);
  for (auto& v : dump.values) {
    v = std::bit_cast<float>(get_u32(p));
    p += 4;
  }
  dump.labels.resize(dump.n);
  for (auto& l : dump.labels) {
    l = get_u32(p);
    p += 4;
  }
  if (has_pred) {
    std::vector<std::uint32_t> pred(dump.n);
    for (auto& v : pred) {
      v = get_u32(p);
      p += 4;
    }
    dump.predictions = std::move(pred);
  }

  const std::size_t consumed = static_cast<std::size_t>(p - reinterpret_cast<const unsigned char*>(bytes.data()));
  std::string_view rest(bytes.data() + consumed, bytes.size() - consumed);
  if (has_ids) {
    if (rest.empty()) throw Error(ErrorCode::TruncatedPayload, "missing doc_ids line");
    if (rest.back() == '\n') rest.remove_suffix(1);
    try {
      dump.doc_ids = json::parse(rest).get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedHeader, std::string("doc_ids line: ") + e.what());
    }
  } else if (!rest.empty()) {
    throw Error(ErrorCode::InvariantViolation, std::to_string(rest.size()) + " trailing bytes after payload");
  }
  dump.validate();
  return dump;
}

void write_activation_dump(const ActivationDump& dump, const std::filesystem::path& path) {
  const std::string bytes = encode_activation_dump(dump);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

ActivationDump read_activation_dump(const std::filesystem::path& path) {
  return decode_activation_dump(slurp(path));
}

// ---------------------------------------------------------------------------

void LabeledDataset::validate() const {
  if (d < 1) throw Error(ErrorCode::InvariantViolation, "dataset needs d >= 1");
  if (features.size() != n * d) throw Error(ErrorCode::InvariantViolation, "features length != n*d");
  if (labels.size() != n) throw Error(ErrorCode::InvariantViolation, "labels length != n");
  if (!feature_names.empty() && feature_names.size() != d) {
    throw Error(ErrorCode::InvariantViolation, "feature_names length != d");
  }
  for (auto l : labels) {
    if (l >= num_classes) throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(l));
  }
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> rows) const {
  LabeledDataset out;
  out.n = rows.size();
  out.d = d;
  out.num_classes = num_classes;
  out.feature_names = feature_names;
  out.features.reserve(rows.size() * d);
  out.labels.reserve(rows.size());
  for (auto r : rows) {
    const auto src = row(r);
    out.features.insert(out.features.end(), src.begin(), src.end());
    out.labels.push_back(labels[r]);
  }
  return out;
}

SplitResult split_dataset(const LabeledDataset& ds, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "test_fraction must lie in (0, 1)");
  }
  if (ds.n < 2) throw Error(ErrorCode::DegenerateSplit, "need at least 2 rows to split");

  std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
  for (std::size_t i = 0; i < ds.n; ++i) by_class[ds.labels[i]].push_back(i);

  Pcg32 rng(seed);
  std::vector<std::size_t> test_count(ds.num_classes);
  std::size_t total_test = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    shuffle(by_class[c], rng);
    test_count[c] = static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(by_class[c].size())));
    total_test += test_count[c];
  }

  auto largest = [&](auto pred) {
    std::size_t best = by_class.size();
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      if (pred(c) && (best == by_class.size() || by_class[c].size() > by_class[best].size())) best = c;
    }
    return best;
  };
  if (total_test == 0) {
    const auto c = largest([&](std::size_t k) { return test_count[k] < by_class[k].size(); });
    if (c == by_class.size()) throw Error(ErrorCode::DegenerateSplit, "test side would be empty");
    ++test_count[c];
    ++total_test;
  }
  if (total_test == ds.n) {
    const auto c = largest([&](std::size_t k) { return test_count[k] > 0; });
    if (c == by_class.size() || total_test <= 1) throw Error(ErrorCode::DegenerateSplit, "train side would be empty");
    --test_count[c];
    --total_test;
  }

  SplitResult result;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const auto& rows = by_class[c];
    result.test_rows.insert(result.test_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(test_count[c]));
    result.train_rows.insert(result.train_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(test_count[c]), rows.end());
  }
  std::sort(result.test_rows.begin(), result.test_rows.end());
  std::sort(result.train_rows.begin(), result.train_rows.end());
  result.train = ds.subset(result.train_rows);
  result.test = ds.subset(result.test_rows);
  return result;
}

// ---------------------------------------------------------------------------

void AnnotatedExample::validate() const {
  std::size_t prev_end = 0;
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    const auto [b, e] = sentences[s];
    if (b >= e || e > tokens.size() || b < prev_end) {
      throw Error(ErrorCode::InvariantViolation, doc_id + ": sentence spans must be nonempty, sorted, disjoint and in range");
    }
    prev_end = e;
  }
  auto check_index = [&](const std::vector<std::optional<std::size_t>>& idx, const char* what) {
    if (!idx.empty() && idx.size() != sentences.size()) {
      throw Error(ErrorCode::InvariantViolation, doc_id + ": one " + what + " entry per sentence required");
    }
    for (std::size_t s = 0; s < idx.size(); ++s) {
      if (idx[s] && (*idx[s] < sentences[s].first || *idx[s] >= sentences[s].second)) {
        throw Error(ErrorCode::InvariantViolation, doc_id + ": " + what + " outside its sentence");
      }
    }
  };
  check_index(subject_index, "subject_index");
  check_index(verb_index, "verb_index");
}

std::optional<std::size_t> AnnotatedExample::sentence_of(std::size_t index) const {
  auto it = std::upper_bound(sentences.begin(), sentences.end(), index,
                             [](std::size_t i, const TokenSpan& s) { return i < s.second; });
  if (it == sentences.end() || index < it->first) return std::nullopt;
  return static_cast<std::size_t>(it - sentences.begin());
}

namespace {

std::vector<std::optional<std::size_t>> optional_indices(const json& j, const char* key) {
  std::vector<std::optional<std::size_t>> out;
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return out;
  for (const auto& v : *it) {
    if (v.is_null()) {
      out.emplace_back();
    } else {
      out.emplace_back(v.get<std::size_t>());
    }
  }
  return out;
}

json indices_to_json(const std::vector<std::optional<std::size_t>>& idx) {
  json arr = json::array();
  for (const auto& v : idx) arr.push_back(v ? json(*v) : json(nullptr));
  return arr;
}

}  // namespace

std::vector<AnnotatedExample> parse_corpus(const std::string& jsonl) {
  std::vector<AnnotatedExample> corpus;
  std::istringstream in(jsonl);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      AnnotatedExample ex;
      ex.doc_id = j.value("doc_id", std::to_string(corpus.size()));
      ex.tokens = j.at("tokens").get<std::vector<std::string>>();
      if (auto it = j.find("sentences"); it != j.end()) {
        for (const auto& s : *it) ex.sentences.emplace_back(s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>());
      } else if (!ex.tokens.empty()) {
        ex.sentences.emplace_back(0, ex.tokens.size());
      }
      ex.subject_index = optional_indices(j, "subject_index");
      ex.verb_index = optional_indices(j, "verb_index");
      ex.label = j.value("label", 0u);
      ex.validate();
      corpus.push_back(std::move(ex));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, "corpus line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseError, "corpus line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return corpus;
}

std::vector<AnnotatedExample> read_corpus(const std::filesystem::path& path) {
  return parse_corpus(slurp(path));
}

std::string corpus_to_jsonl(std::span<const AnnotatedExample> corpus) {
  std::string out;
  for (const auto& ex : corpus) {
    ordered_json j;
    j["doc_id"] = ex.doc_id;
    j["tokens"] = ex.tokens;
    json spans = json::array();
    for (const auto& [b, e] : ex.sentences) spans.push_back({b, e});
    j["sentences"] = spans;
    j["subject_index"] = indices_to_json(ex.subject_index);
    j["verb_index"] = indices_to_json(ex.verb_index);
    j["label"] = ex.label;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

}  // namespace neurules
