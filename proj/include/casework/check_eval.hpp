#pragma once

#include "casework/json_io.hpp"
#include "casework/llm.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

// Checklist-based evaluation of a candidate text against a reference, plus
// the summary statistics and rank correlations used to report it.
namespace casework::checkeval {

enum class ChecklistSource { Reference, Candidate };
std::string_view to_string(ChecklistSource s);

struct ChecklistItem {
    std::size_t item_id = 0; // 1-based
    std::string statement;

    bool operator==(const ChecklistItem&) const = default;
};

struct Checklist {
    ChecklistSource source = ChecklistSource::Reference;
    std::vector<ChecklistItem> items;
};

/// Every numbered or bulleted line, at any indent, becomes one item.
/// Throws ChecklistParseError when no item is found.
std::vector<std::string> parse_checklist_items(std::string_view reply);

std::string checklist_prompt(std::string_view text);
Checklist generate_checklist(std::string_view text, ChecklistSource source, llm::LlmGateway& gateway);

struct ItemJudgment {
    std::size_t item_id = 0;
    bool present = false;

    bool operator==(const ItemJudgment&) const = default;
};

/// "<n>. yes|no" lines; nullopt unless items 1..n are each answered once.
std::optional<std::vector<bool>> parse_judgments(std::string_view reply, std::size_t item_count);

std::string judgment_prompt(const Checklist& checklist, std::string_view target_text);

/// A reply with the wrong number of answers gets one reprompt, then
/// JudgmentParseError.
std::vector<ItemJudgment> judge_against(const Checklist& checklist, std::string_view target_text,
                                        llm::LlmGateway& gateway);

/// Share of judgments marked present.
double fraction_present(std::span<const ItemJudgment> judgments);

struct EvalScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;

    bool operator==(const EvalScores&) const = default;
};

void to_json(Json& j, const EvalScores& s);
void from_json(const Json& j, EvalScores& s);

/// Harmonic mean; 0 when p + r == 0.
double f1_score(double precision, double recall);
EvalScores make_scores(double precision, double recall);

/// precision: candidate checklist verified against the reference;
/// recall: reference checklist verified against the candidate.
EvalScores score_pair(std::string_view reference_text, std::string_view candidate_text, llm::LlmGateway& gateway);

struct MetricStats {
    double mean = 0.0;
    double std = 0.0; // sample (n-1); 0 for a single value
    double min = 0.0;
    double max = 0.0;
    std::size_t n = 0;
};

struct AggregateStats {
    MetricStats precision;
    MetricStats recall;
    MetricStats f1;
};

void to_json(Json& j, const MetricStats& m);
void to_json(Json& j, const AggregateStats& a);

/// Throws EmptyInput for an empty span.
MetricStats describe(std::span<const double> values);
AggregateStats aggregate_stats(std::span<const EvalScores> scores);

/// 1-based ranks; tied values share the average of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation of average ranks. Throws DimensionError on a length
/// mismatch or fewer than two values, Undefined on zero rank variance.
double spearman(std::span<const double> x, std::span<const double> y);

/// Pair counts behind tau-b. `tied_x` and `tied_y` include pairs tied in
/// both; `tied_xy` counts those separately.
struct KendallCounts {
    std::uint64_t pairs = 0;
    std::uint64_t concordant = 0;
    std::uint64_t discordant = 0;
    std::uint64_t tied_x = 0;
    std::uint64_t tied_y = 0;
    std::uint64_t tied_xy = 0;

    bool operator==(const KendallCounts&) const = default;
};

/// O(n log n) counting by sorting and merge-sort inversion counting.
KendallCounts kendall_counts(std::span<const double> x, std::span<const double> y);

/// Tau-b. Errors as for spearman.
double kendall_tau(std::span<const double> x, std::span<const double> y);

struct CorrelationResult {
    double spearman_rho = 0.0;
    double kendall_tau = 0.0;
    std::size_t n = 0;
};

void to_json(Json& j, const CorrelationResult& c);

CorrelationResult correlate(std::span<const double> x, std::span<const double> y);

struct BenchmarkRow {
    std::string id;
    std::string reference;
    std::string candidate;
    std::map<std::string, std::optional<double>> human_scores;
};

/// JSON lines {id?, reference, candidate, human_scores: {dimension: score}}.
std::vector<BenchmarkRow> load_benchmark(const std::filesystem::path& path);

enum class Metric { Precision, Recall, F1 };
Metric metric_from_string(std::string_view s);
double pick(const EvalScores& s, Metric m);

struct BenchmarkResult {
    std::map<std::string, CorrelationResult> dimensions;
    std::vector<std::string> warnings;
    std::size_t rows_scored = 0;
};

void to_json(Json& j, const BenchmarkResult& r);

using PairScorer = std::function<EvalScores(std::string_view reference, std::string_view candidate)>;

/// Correlates the metric with each human dimension. Rows without a score
/// for a dimension, or whose scoring fails, are skipped with a warning.
BenchmarkResult benchmark_harness(std::span<const BenchmarkRow> rows, const PairScorer& scorer,
                                  Metric metric = Metric::F1);
BenchmarkResult benchmark_harness(std::span<const BenchmarkRow> rows, llm::LlmGateway& gateway,
                                  Metric metric = Metric::F1);

} // namespace casework::checkeval
