#include "neurules/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "neurules/error.hpp"
#include "neurules/format.hpp"

namespace neurules {

using nlohmann::ordered_json;

namespace {

std::string aligned_table(const std::vector<std::string>& head, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(head.size());
  for (std::size_t c = 0; c < head.size(); ++c) {
    width[c] = head[c].size();
    for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c > 0) out += " | ";
      const std::string pad(width[c] - cells[c].size(), ' ');
      out += c == 0 ? cells[c] + pad : pad + cells[c];
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out + "\n";
  };
  std::string out = line(head);
  for (std::size_t c = 0; c < head.size(); ++c) {
    if (c > 0) out += "-|-";
    out += std::string(width[c], '-');
  }
  out += "\n";
  for (const auto& r : rows) out += line(r);
  return out;
}

const std::vector<std::string> kMetricHead{"Run", "Accuracy", "Fidelity", "Runtime (s)", "#Clauses", "Avg. length"};

std::vector<std::string> metric_cells(const std::string& label, const Metrics& m) {
  return {label,
          format_fixed(100.0 * m.accuracy, 1),
          format_fixed(100.0 * m.fidelity, 1),
          format_fixed(m.runtime_seconds, 3),
          std::to_string(m.num_clauses),
          format_fixed(m.avg_clause_length, 2)};
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

ReportFormat report_format_from_string(const std::string& s) {
  if (s == "json") return ReportFormat::Json;
  if (s == "text") return ReportFormat::Text;
  if (s == "csv") return ReportFormat::Csv;
  throw Error(ErrorCode::InvalidArgument, "unknown report format '" + s + "' (json, text, csv)");
}

std::string render_metrics(const std::vector<MetricsRow>& rows, ReportFormat format) {
  switch (format) {
    case ReportFormat::Json: {
      ordered_json arr = ordered_json::array();
      for (const auto& [label, m] : rows) {
        ordered_json j;
        j["run"] = label;
        const auto fields = ordered_json::parse(m.to_json());  // items() of a temporary dangles
        for (const auto& [k, v] : fields.items()) j[k] = v;
        arr.push_back(std::move(j));
      }
      return arr.dump(2) + "\n";
    }
    case ReportFormat::Csv: {
      std::string out = "run,accuracy,fidelity,runtime_seconds,num_clauses,avg_clause_length\n";
      for (const auto& [label, m] : rows) {
        out += csv_cell(label) + "," + format_double(m.accuracy) + "," + format_double(m.fidelity) + "," +
               format_double(m.runtime_seconds) + "," + std::to_string(m.num_clauses) + "," +
               format_double(m.avg_clause_length) + "\n";
      }
      return out;
    }
    case ReportFormat::Text: {
      std::vector<std::vector<std::string>> cells;
      for (const auto& [label, m] : rows) cells.push_back(metric_cells(label, m));
      return aligned_table(kMetricHead, cells);
    }
  }
  return {};
}

std::string render_metrics_summary(const std::string& label, const std::vector<Metrics>& runs) {
  if (runs.empty()) throw Error(ErrorCode::EmptyInput, "no runs to summarise");
  auto stat = [&](auto get, double scale, int decimals) {
    double sum = 0.0;
    for (const auto& m : runs) sum += scale * static_cast<double>(get(m));
    const double mean = sum / static_cast<double>(runs.size());
    double var = 0.0;
    for (const auto& m : runs) var += std::pow(scale * static_cast<double>(get(m)) - mean, 2);
    const double sd = runs.size() > 1 ? std::sqrt(var / static_cast<double>(runs.size() - 1)) : 0.0;
    return format_fixed(mean, decimals) + " ± " + format_fixed(sd, decimals);
  };
  std::vector<std::string> row{label,
                               stat([](const Metrics& m) { return m.accuracy; }, 100.0, 1),
                               stat([](const Metrics& m) { return m.fidelity; }, 100.0, 1),
                               stat([](const Metrics& m) { return m.runtime_seconds; }, 1.0, 3),
                               stat([](const Metrics& m) { return m.num_clauses; }, 1.0, 1),
                               stat([](const Metrics& m) { return m.avg_clause_length; }, 1.0, 1)};
  return aligned_table(kMetricHead, {row});
}

std::string render_rules(const RuleModel& model, ReportFormat format) {
  switch (format) {
    case ReportFormat::Json: return model.to_json();
    case ReportFormat::Csv: {
      std::string out = "class,clause,support,length,literals\n";
      for (const auto& rule : model.rules) {
        for (std::size_t i = 0; i < rule.clauses.size(); ++i) {
          const auto& c = rule.clauses[i];
          out += std::to_string(rule.target_class) + "," + std::to_string(i) + "," + std::to_string(c.support) + "," +
                 std::to_string(c.literals.size()) + "," + csv_cell(c.render()) + "\n";
        }
      }
      return out;
    }
    case ReportFormat::Text: {
      std::string out;
      for (const auto& rule : model.rules) {
        if (!rule.clauses.empty()) out += rule.render() + "\n";
      }
      out += "default: class " + std::to_string(model.default_class) + "\n";
      out += "clauses: " + std::to_string(model.num_clauses()) +
             ", avg. length: " + format_fixed(model.avg_clause_length(), 2) + "\n";
      return out;
    }
  }
  return {};
}

std::string render_grounded(const LexicalResult& result, ReportFormat format) {
  switch (format) {
    case ReportFormat::Json: return result.to_json();
    case ReportFormat::Text: return result.to_table();
    case ReportFormat::Csv: {
      std::string out = "keyword,template,flips,total,flip_rate,idf,score,class\n";
      for (const auto& r : result.rules) {
        out += csv_cell(r.abstraction.keyword) + "," + std::string(to_string(r.abstraction.template_type)) + "," +
               std::to_string(r.flips) + "," + std::to_string(r.total) + "," + format_double(r.flip_rate) + "," +
               format_double(r.idf) + "," + format_double(r.score) + "," + std::to_string(r.target_class) + "\n";
      }
      return out;
    }
  }
  return {};
}

std::string render_file(const std::filesystem::path& path, ReportFormat format) {
  const std::string text = read_text(path);
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // Byte offset -> 1-based line number.
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw Error(ErrorCode::ParseError, path.string() + ":" + std::to_string(line) + ": " + e.what());
  }
  try {
    if (j.is_object() && j.contains("accuracy")) return render_metrics({{path.stem().string(), Metrics::from_json(text)}}, format);
    if (j.is_array()) {
      std::vector<MetricsRow> rows;
      for (const auto& o : j) rows.emplace_back(o.value("run", std::string{}), Metrics::from_json(o.dump()));
      return render_metrics(rows, format);
    }
    if (j.is_object() && j.contains("tree")) return render_rules(RuleModel::from_json(text), format);
    if (j.is_object() && j.contains("rules") && j.contains("examples_tested")) {
      return render_grounded(LexicalResult::from_json(text), format);
    }
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, path.string() + ":1: " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ":1: " + e.what());
  }
  throw Error(ErrorCode::ParseError, path.string() + ":1: unrecognised document (expected metrics, rules or grounded rules)");
}

}  // namespace neurules
