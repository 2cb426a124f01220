#include "casework/check_eval.hpp"

#include "casework/error.hpp"
#include "casework/text.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace casework::checkeval {

std::string_view to_string(ChecklistSource s) {
    return s == ChecklistSource::Reference ? "Reference" : "Candidate";
}

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Body of an enumerated line, or nullopt for prose.
std::optional<std::string_view> list_item_body(std::string_view line) {
    std::string_view t = text::trim(line);
    if (t.empty()) return std::nullopt;
    std::string_view body;
    if (t.front() == '-' || t.front() == '*' || t.front() == '+') {
        body = t.substr(1);
    } else if (t.rfind("•", 0) == 0) {
        body = t.substr(3);
    } else if (is_digit(t.front())) {
        std::size_t i = 0;
        // 1. / 1) / 1.2. / 1.2)
        while (i < t.size() && (is_digit(t[i]) || (t[i] == '.' && i + 1 < t.size() && is_digit(t[i + 1])))) ++i;
        if (i >= t.size() || (t[i] != '.' && t[i] != ')')) return std::nullopt;
        body = t.substr(i + 1);
    } else if (t.size() >= 2 && t[0] >= 'a' && t[0] <= 'z' && t[1] == ')') {
        body = t.substr(2);
    } else {
        return std::nullopt;
    }
    body = text::trim(body);
    for (const std::string_view box : {"[ ]", "[x]", "[X]"}) {
        if (body.rfind(box, 0) == 0) body = text::trim(body.substr(box.size()));
    }
    return body;
}

} // namespace

std::vector<std::string> parse_checklist_items(std::string_view reply) {
    std::vector<std::string> items;
    for (const auto line : text::split_lines(reply)) {
        if (const auto body = list_item_body(line); body && !body->empty()) {
            items.emplace_back(*body);
        }
    }
    if (items.empty()) {
        throw Error(ErrorKind::ChecklistParseError, "reply contains no checklist items");
    }
    return items;
}

std::string checklist_prompt(std::string_view text) {
    return "## Instructions\n\nRead the text below and compose a checklist of the elements it contains. Write one "
           "atomic verifiable element per line, as a numbered list, and nothing else.\n\n## Text\n\n" +
           std::string(text) + "\n";
}

Checklist generate_checklist(std::string_view text, ChecklistSource source, llm::LlmGateway& gateway) {
    require(!text::trim(text).empty(), "checklist text is empty");
    const std::string head = checklist_prompt("");
    const std::size_t overhead = gateway.tokenizer().count(head);
    require(overhead < gateway.prompt_budget(), "checklist prompt exceeds the context budget");
    const std::string body = llm::truncate_to_budget(text, gateway.prompt_budget() - overhead, gateway.tokenizer());
    Checklist out;
    out.source = source;
    const auto statements = parse_checklist_items(gateway.complete(checklist_prompt(body)).text);
    for (std::size_t i = 0; i < statements.size(); ++i) {
        out.items.push_back({i + 1, statements[i]});
    }
    return out;
}

std::optional<std::vector<bool>> parse_judgments(std::string_view reply, std::size_t item_count) {
    std::vector<std::optional<bool>> answers(item_count);
    std::size_t seen = 0;
    for (const auto raw : text::split_lines(reply)) {
        std::string_view t = text::trim(raw);
        std::size_t i = 0;
        while (i < t.size() && is_digit(t[i])) ++i;
        if (i == 0 || i >= t.size() || (t[i] != '.' && t[i] != ')' && t[i] != ':')) continue;
        const std::size_t n = std::stoul(std::string(t.substr(0, i)));
        std::string word = text::to_lower(text::trim(t.substr(i + 1)));
        const auto end = word.find_first_of(" .,;:(");
        if (end != std::string::npos) word.resize(end);
        std::optional<bool> value;
        if (word == "yes" || word == "sim") value = true;
        if (word == "no" || word == "não" || word == "nao") value = false;
        if (!value) continue;
        if (n < 1 || n > item_count || answers[n - 1]) return std::nullopt;
        answers[n - 1] = value;
        ++seen;
    }
    if (seen != item_count) return std::nullopt;
    std::vector<bool> out;
    for (const auto& a : answers) out.push_back(*a);
    return out;
}

std::string judgment_prompt(const Checklist& checklist, std::string_view target_text) {
    std::string items;
    for (const auto& it : checklist.items) {
        items += std::to_string(it.item_id) + ". " + it.statement + "\n";
    }
    return "## Checklist\n\n" + items + "\n## Text\n\n" + std::string(target_text) +
           "\n\n## Instructions\n\nFor each checklist item, decide whether the text contains that element. Answer "
           "with exactly one line per item, in the form \"<n>. yes\" or \"<n>. no\".\n";
}

std::vector<ItemJudgment> judge_against(const Checklist& checklist, std::string_view target_text,
                                        llm::LlmGateway& gateway) {
    require(!checklist.items.empty(), "checklist is empty");
    require(!text::trim(target_text).empty(), "target text is empty");
    const std::size_t overhead = gateway.tokenizer().count(judgment_prompt(checklist, ""));
    require(overhead < gateway.prompt_budget(), "judgment prompt exceeds the context budget");
    const std::string prompt = judgment_prompt(
        checklist, llm::truncate_to_budget(target_text, gateway.prompt_budget() - overhead, gateway.tokenizer()));
    const std::size_t n = checklist.items.size();
    for (int attempt = 0; attempt < 2; ++attempt) {
        const std::string p = attempt == 0 ? prompt
                                           : prompt + "\nYour previous reply did not answer each of the " +
                                                 std::to_string(n) + " items exactly once. Answer again.\n";
        if (const auto parsed = parse_judgments(gateway.complete(p).text, n)) {
            std::vector<ItemJudgment> out;
            for (std::size_t i = 0; i < n; ++i) out.push_back({checklist.items[i].item_id, (*parsed)[i]});
            return out;
        }
    }
    throw Error(ErrorKind::JudgmentParseError,
                "judgment reply did not answer " + std::to_string(n) + " items after a reprompt");
}

double fraction_present(std::span<const ItemJudgment> judgments) {
    require(!judgments.empty(), "no judgments");
    const auto present = std::count_if(judgments.begin(), judgments.end(), [](const ItemJudgment& j) { return j.present; });
    return static_cast<double>(present) / static_cast<double>(judgments.size());
}

void to_json(Json& j, const EvalScores& s) {
    j = Json{{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
}

void from_json(const Json& j, EvalScores& s) {
    s.precision = j.at("precision").get<double>();
    s.recall = j.at("recall").get<double>();
    s.f1 = j.contains("f1") ? j.at("f1").get<double>() : f1_score(s.precision, s.recall);
}

double f1_score(double precision, double recall) {
    const double sum = precision + recall;
    return sum == 0.0 ? 0.0 : 2.0 * precision * recall / sum;
}

EvalScores make_scores(double precision, double recall) {
    require(precision >= 0.0 && precision <= 1.0 && recall >= 0.0 && recall <= 1.0, "scores must lie in [0, 1]");
    return {precision, recall, f1_score(precision, recall)};
}

EvalScores score_pair(std::string_view reference_text, std::string_view candidate_text, llm::LlmGateway& gateway) {
    require(!text::trim(reference_text).empty(), "reference text is empty");
    require(!text::trim(candidate_text).empty(), "candidate text is empty");
    const Checklist reference = generate_checklist(reference_text, ChecklistSource::Reference, gateway);
    const Checklist candidate = generate_checklist(candidate_text, ChecklistSource::Candidate, gateway);
    const double recall = fraction_present(judge_against(reference, candidate_text, gateway));
    const double precision = fraction_present(judge_against(candidate, reference_text, gateway));
    return make_scores(precision, recall);
}

void to_json(Json& j, const MetricStats& m) {
    j = Json{{"mean", m.mean}, {"std", m.std}, {"min", m.min}, {"max", m.max}, {"n", m.n}};
}

void to_json(Json& j, const AggregateStats& a) {
    j = Json{{"precision", a.precision}, {"recall", a.recall}, {"f1", a.f1}};
}

MetricStats describe(std::span<const double> values) {
    if (values.empty()) {
        throw Error(ErrorKind::EmptyInput, "cannot aggregate an empty score list");
    }
    MetricStats m;
    m.n = values.size();
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    m.min = *lo;
    m.max = *hi;
    const double sum = std::accumulate(values.begin(), values.end(), 0.0);
    // Rounding can push the mean of equal values past them; keep it bracketed.
    m.mean = std::clamp(sum / static_cast<double>(m.n), m.min, m.max);
    if (m.n > 1) {
        double ss = 0.0;
        for (const double v : values) ss += (v - m.mean) * (v - m.mean);
        m.std = m.min == m.max ? 0.0 : std::sqrt(ss / static_cast<double>(m.n - 1));
    }
    return m;
}

AggregateStats aggregate_stats(std::span<const EvalScores> scores) {
    if (scores.empty()) {
        throw Error(ErrorKind::EmptyInput, "cannot aggregate an empty score list");
    }
    std::vector<double> p, r, f;
    for (const auto& s : scores) {
        p.push_back(s.precision);
        r.push_back(s.recall);
        f.push_back(s.f1);
    }
    return {describe(p), describe(r), describe(f)};
}

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        // positions i..j (0-based) share rank ((i+1)+(j+1))/2
        const double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

namespace {

void check_dimensions(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw Error(ErrorKind::DimensionError, "vectors have lengths " + std::to_string(x.size()) + " and " +
                                                   std::to_string(y.size()));
    }
    if (x.size() < 2) {
        throw Error(ErrorKind::DimensionError, "correlation needs at least two observations");
    }
}

} // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
    check_dimensions(x, y);
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double mean = (static_cast<double>(x.size()) + 1.0) / 2.0;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        const double dx = rx[i] - mean;
        const double dy = ry[i] - mean;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw Error(ErrorKind::Undefined, "rank variance is zero");
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

std::uint64_t tie_pairs(std::uint64_t run) { return run * (run - 1) / 2; }

// Sorts v ascending, returning the number of strict inversions.
std::uint64_t merge_count(std::vector<double>& v, std::vector<double>& buf, std::size_t lo, std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::uint64_t swaps = merge_count(v, buf, lo, mid) + merge_count(v, buf, mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (v[i] <= v[j]) {
            buf[k++] = v[i++];
        } else {
            swaps += mid - i;
            buf[k++] = v[j++];
        }
    }
    while (i < mid) buf[k++] = v[i++];
    while (j < hi) buf[k++] = v[j++];
    std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
              v.begin() + static_cast<std::ptrdiff_t>(lo));
    return swaps;
}

} // namespace

KendallCounts kendall_counts(std::span<const double> x, std::span<const double> y) {
    check_dimensions(x, y);
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return x[a] != x[b] ? x[a] < x[b] : y[a] < y[b];
    });

    KendallCounts c;
    c.pairs = tie_pairs(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i + 1;
        while (j < n && x[order[j]] == x[order[i]]) ++j;
        c.tied_x += tie_pairs(j - i);
        for (std::size_t a = i; a < j;) {
            std::size_t b = a + 1;
            while (b < j && y[order[b]] == y[order[a]]) ++b;
            c.tied_xy += tie_pairs(b - a);
            a = b;
        }
        i = j;
    }

    std::vector<double> ys(n), buf(n);
    for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
    c.discordant = merge_count(ys, buf, 0, n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i + 1;
        while (j < n && ys[j] == ys[i]) ++j;
        c.tied_y += tie_pairs(j - i);
        i = j;
    }
    c.concordant = c.pairs - c.tied_x - c.tied_y + c.tied_xy - c.discordant;
    return c;
}

double kendall_tau(std::span<const double> x, std::span<const double> y) {
    const KendallCounts c = kendall_counts(x, y);
    const double dx = static_cast<double>(c.pairs - c.tied_x);
    const double dy = static_cast<double>(c.pairs - c.tied_y);
    if (dx == 0.0 || dy == 0.0) {
        throw Error(ErrorKind::Undefined, "one ranking is constant");
    }
    const double s = static_cast<double>(c.concordant) - static_cast<double>(c.discordant);
    return std::clamp(s / std::sqrt(dx * dy), -1.0, 1.0);
}

void to_json(Json& j, const CorrelationResult& c) {
    j = Json{{"spearman_rho", c.spearman_rho}, {"kendall_tau", c.kendall_tau}, {"n", c.n}};
}

CorrelationResult correlate(std::span<const double> x, std::span<const double> y) {
    return {spearman(x, y), kendall_tau(x, y), x.size()};
}

std::vector<BenchmarkRow> load_benchmark(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::IoError, "cannot open benchmark dataset " + path.string());
    }
    std::vector<BenchmarkRow> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const Json::exception& e) {
            throw Error(ErrorKind::ParseError, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        BenchmarkRow row;
        row.id = j.contains("id") ? (j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump())
                                  : std::to_string(line_no);
        row.reference = j.value("reference", "");
        row.candidate = j.value("candidate", "");
        if (j.contains("human_scores") && j["human_scores"].is_object()) {
            for (const auto& [dim, v] : j["human_scores"].items()) {
                row.human_scores[dim] = v.is_number() ? std::optional<double>(v.get<double>()) : std::nullopt;
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

Metric metric_from_string(std::string_view s) {
    if (s == "precision") return Metric::Precision;
    if (s == "recall") return Metric::Recall;
    if (s == "f1") return Metric::F1;
    throw Error(ErrorKind::ConfigError, "unknown metric '" + std::string(s) + "'");
}

double pick(const EvalScores& s, Metric m) {
    switch (m) {
    case Metric::Precision: return s.precision;
    case Metric::Recall: return s.recall;
    case Metric::F1: return s.f1;
    }
    return s.f1;
}

void to_json(Json& j, const BenchmarkResult& r) {
    j = Json{{"dimensions", r.dimensions}, {"warnings", r.warnings}, {"rows_scored", r.rows_scored}};
}

BenchmarkResult benchmark_harness(std::span<const BenchmarkRow> rows, const PairScorer& scorer, Metric metric) {
    require(!rows.empty(), "benchmark dataset is empty");
    BenchmarkResult result;
    std::vector<std::string> dimensions;
    for (const auto& row : rows) {
        for (const auto& [dim, _] : row.human_scores) {
            if (std::find(dimensions.begin(), dimensions.end(), dim) == dimensions.end()) dimensions.push_back(dim);
        }
    }
    std::sort(dimensions.begin(), dimensions.end());
    require(!dimensions.empty(), "benchmark rows carry no human scores");

    std::vector<std::optional<double>> metric_values(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.human_scores.empty()) {
            result.warnings.push_back("row " + row.id + ": no human scores, skipped");
            continue;
        }
        if (text::trim(row.reference).empty() || text::trim(row.candidate).empty()) {
            result.warnings.push_back("row " + row.id + ": missing reference or candidate, skipped");
            continue;
        }
        try {
            metric_values[i] = pick(scorer(row.reference, row.candidate), metric);
            ++result.rows_scored;
        } catch (const Error& e) {
            result.warnings.push_back("row " + row.id + ": scoring failed (" + e.what() + "), skipped");
        }
    }

    for (const auto& dim : dimensions) {
        std::vector<double> xs, ys;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (!metric_values[i]) continue;
            const auto it = rows[i].human_scores.find(dim);
            if (it == rows[i].human_scores.end() || !it->second) {
                result.warnings.push_back("row " + rows[i].id + ": no " + dim + " score, skipped for " + dim);
                continue;
            }
            xs.push_back(*metric_values[i]);
            ys.push_back(*it->second);
        }
        try {
            result.dimensions[dim] = correlate(xs, ys);
        } catch (const Error& e) {
            result.warnings.push_back(dim + ": correlation not computed (" + e.what() + ")");
        }
    }
    return result;
}

BenchmarkResult benchmark_harness(std::span<const BenchmarkRow> rows, llm::LlmGateway& gateway, Metric metric) {
    return benchmark_harness(
        rows, [&](std::string_view ref, std::string_view cand) { return score_pair(ref, cand, gateway); }, metric);
}

} // namespace casework::checkeval
