#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "neurules/activation_store.hpp"
#include "neurules/error.hpp"
#include "neurules/format.hpp"

namespace neurules {

namespace {

// RFC-4180 records: comma separated, optional double quotes with "" escapes,
// LF or CRLF line endings. Quoted fields may span lines.
std::vector<std::vector<std::string>> parse_records(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(ch);
      }
      continue;
    }
    switch (ch) {
      case '"':
        quoted = true;
        field_started = true;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_started = true;
        break;
      case '\r':
        break;
      case '\n':
        if (field_started || !field.empty() || !record.empty()) {
          record.push_back(std::move(field));
          records.push_back(std::move(record));
        }
        field.clear();
        record.clear();
        field_started = false;
        break;
      default:
        field.push_back(ch);
        field_started = true;
    }
  }
  if (quoted) throw Error(ErrorCode::ParseError, "unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  return records;
}

bool parse_number(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace

LabeledDataset parse_csv(const std::string& text, const std::string& label_column, std::uint32_t num_classes) {
  const auto records = parse_records(text);
  if (records.empty()) throw Error(ErrorCode::ParseError, "CSV has no header row");
  const auto& header = records.front();

  std::size_t label_col = header.size();
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == label_column) {
      label_col = c;
      break;
    }
  }
  if (label_col == header.size()) throw Error(ErrorCode::MissingLabelColumn, "no column named '" + label_column + "'");
  if (header.size() < 2) throw Error(ErrorCode::InvariantViolation, "CSV needs at least one feature column");

  LabeledDataset ds;
  ds.d = header.size() - 1;
  ds.num_classes = num_classes;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c != label_col) ds.feature_names.push_back(header[c]);
  }

  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.size() != header.size()) {
      throw Error(ErrorCode::ParseError, "row " + std::to_string(r) + " has " + std::to_string(rec.size()) +
                                             " fields, header has " + std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < rec.size(); ++c) {
      double v = 0.0;
      if (!parse_number(rec[c], v)) {
        throw Error(ErrorCode::NonNumericCell, "row " + std::to_string(r) + ", column " + std::to_string(c + 1) +
                                                   " ('" + header[c] + "'): \"" + rec[c] + "\"");
      }
      if (c == label_col) {
        if (v < 0 || v != std::floor(v) || v >= static_cast<double>(num_classes)) {
          throw Error(ErrorCode::LabelOutOfRange, "row " + std::to_string(r) + ": label " + rec[c] +
                                                      " not in [0, " + std::to_string(num_classes) + ")");
        }
        ds.labels.push_back(static_cast<std::uint32_t>(v));
      } else {
        ds.features.push_back(v);
      }
    }
    ++ds.n;
  }
  ds.validate();
  return ds;
}

LabeledDataset ingest_csv(const std::filesystem::path& path, const std::string& label_column,
                          std::uint32_t num_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), label_column, num_classes);
}

std::string format_csv(const LabeledDataset& ds, const std::string& label_column) {
  std::string out;
  for (std::size_t f = 0; f < ds.d; ++f) {
    out += (ds.feature_names.empty() ? "x" + std::to_string(f + 1) : ds.feature_names[f]) + ",";
  }
  out += label_column + "\n";
  for (std::size_t i = 0; i < ds.n; ++i) {
    for (double v : ds.row(i)) out += format_double(v) + ",";
    out += std::to_string(ds.labels[i]) + "\n";
  }
  return out;
}

void write_csv(const LabeledDataset& ds, const std::filesystem::path& path, const std::string& label_column) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  out << format_csv(ds, label_column);
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

}  // namespace neurules
