#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "neurules/lexical.hpp"
#include "neurules/rules.hpp"

namespace neurules {

enum class ReportFormat { Json, Text, Csv };

ReportFormat report_format_from_string(const std::string& s);

/// One labelled row per run: Accuracy | Fidelity | Runtime (s) | #Clauses | Avg. length.
using MetricsRow = std::pair<std::string, Metrics>;

std::string render_metrics(const std::vector<MetricsRow>& rows, ReportFormat format);

/// Mean and sample standard deviation of each column, rendered "m ± s".
std::string render_metrics_summary(const std::string& label, const std::vector<Metrics>& runs);

std::string render_rules(const RuleModel& model, ReportFormat format);
std::string render_grounded(const LexicalResult& result, ReportFormat format);

/// Detects the document kind (metrics, rule model, grounded rules) and renders
/// it. Parse failures name the path and the offending line.
std::string render_file(const std::filesystem::path& path, ReportFormat format);

}  // namespace neurules
