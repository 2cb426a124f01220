// Command-line front end: case runs, partial reruns, evaluation and
// validation-table tooling, and the HTTP service.
#include <CLI11.hpp>

#include "casework/check_eval.hpp"
#include "casework/config.hpp"
#include "casework/error.hpp"
#include "casework/pipeline.hpp"
#include "casework/service.hpp"
#include "casework/text.hpp"
#include "casework/validation.hpp"

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace casework;

namespace {

constexpr int kStageFailed = 1;
constexpr int kUsageError = 2;

int report_run(const pipeline::RunReport& report) {
    std::cout << report.to_json().dump(2) << "\n";
    if (!report.ok()) {
        const auto* failed = report.find(*report.failed_stage);
        std::cerr << "stage " << pipeline::to_string(*report.failed_stage) << " failed: "
                  << (failed ? failed->error : std::string()) << "\n";
        return kStageFailed;
    }
    return 0;
}

std::pair<std::string, int> split_addr(const std::string& addr) {
    const auto colon = addr.rfind(':');
    if (colon == std::string::npos) throw Error(ErrorKind::ConfigError, "address must be host:port");
    return {addr.substr(0, colon), std::stoi(addr.substr(colon + 1))};
}

std::string text_or_file(const Json& row, const char* key) {
    if (row.contains(key)) return row[key].get<std::string>();
    const std::string path_key = std::string(key) + "_path";
    if (row.contains(path_key)) return read_file(row[path_key].get<std::string>());
    throw Error(ErrorKind::ParseError, std::string("pair lacks '") + key + "'");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Audit-case pipeline and checklist evaluation"};
    app.require_subcommand(1);
    std::string config_path = "config.json";
    app.add_option("-c,--config", config_path, "Pipeline config (JSON)");

    auto* run = app.add_subcommand("run", "Run every stage of a case bundle that is not fresh");
    std::string bundle, until;
    run->add_option("bundle", bundle, "Bundle directory containing manifest.json")->required();
    run->add_option("--until", until, "Stop after this stage");

    auto* resume = app.add_subcommand("resume", "Rerun one stage and its dependents");
    std::string case_ref, stage_name;
    resume->add_option("case", case_ref, "Case id or workspace directory")->required();
    resume->add_option("stage", stage_name, "Stage name")->required();

    auto* regen = app.add_subcommand("regenerate", "Redraft one instruction section");
    std::string section_name;
    regen->add_option("case", case_ref, "Case id or workspace directory")->required();
    regen->add_option("section", section_name,
                      "BasicInfo | ClaimsRequests | Admissibility | Precautionary | Recommendations")
        ->required();

    auto* status = app.add_subcommand("status", "Show stage freshness of a case");
    status->add_option("case", case_ref, "Case id or workspace directory")->required();

    auto* eval = app.add_subcommand("eval", "Checklist evaluation");
    eval->require_subcommand(1);
    auto* score = eval->add_subcommand("score", "Score one candidate against one reference");
    std::string reference, candidate;
    score->add_option("--reference", reference, "Reference text file")->required();
    score->add_option("--candidate", candidate, "Candidate text file")->required();

    auto* batch = eval->add_subcommand("score-batch", "Score every pair of a JSON-lines file");
    std::string pairs, out_dir;
    batch->add_option("--pairs", pairs, "JSON lines {id, reference|reference_path, candidate|candidate_path}")
        ->required();
    batch->add_option("--out", out_dir, "Directory receiving one <id>.json per pair")->required();

    auto* aggregate = eval->add_subcommand("aggregate", "Mean/std/min/max over a directory of scores");
    std::string scores_dir;
    aggregate->add_option("--scores", scores_dir, "Directory of score JSON files")->required();

    auto* bench = eval->add_subcommand("benchmark", "Correlate the metric with human judgments");
    std::string dataset, metric = "f1";
    bench->add_option("--dataset", dataset, "JSON lines {reference, candidate, human_scores}")->required();
    bench->add_option("--metric", metric, "precision | recall | f1");

    auto* validate = app.add_subcommand("validate", "Validation-table tooling");
    validate->require_subcommand(1);
    auto* vbuild = validate->add_subcommand("build", "Parse standardized instructions into a table");
    std::string docs_dir, table_out = "validation.jsonl", csv_out, schema_path, vconfig_path;
    bool use_llm = false;
    vbuild->add_option("docs", docs_dir, "Directory of instruction .md/.txt files")->required();
    vbuild->add_option("--out", table_out, "JSON-lines output");
    vbuild->add_option("--csv", csv_out, "Label CSV output");
    vbuild->add_option("--schema", schema_path, "Form schema JSON (default: built-in)");
    vbuild->add_option("--headers", vconfig_path, "Header/label vocabulary JSON");
    vbuild->add_flag("--llm", use_llm, "Extract basic information with the configured model");

    auto* serve = app.add_subcommand("serve", "Start the HTTP service");
    std::string addr = "127.0.0.1:8080";
    serve->add_option("--addr", addr, "host:port");

    CLI11_PARSE(app, argc, argv);

    try {
        const auto load_config = [&] { return PipelineConfig::load(config_path); };

        if (run->parsed()) {
            pipeline::Pipeline p(load_config());
            pipeline::RunOptions options;
            if (!until.empty()) options.stop_after = pipeline::stage_from_string(until);
            return report_run(p.run_case(bundle, options));
        }
        if (resume->parsed()) {
            pipeline::Pipeline p(load_config());
            return report_run(p.resume_stage(p.open_workspace(case_ref), pipeline::stage_from_string(stage_name)));
        }
        if (regen->parsed()) {
            pipeline::Pipeline p(load_config());
            return report_run(
                p.regenerate_section(p.open_workspace(case_ref), recommendations::section_from_string(section_name)));
        }
        if (status->parsed()) {
            pipeline::Pipeline p(load_config());
            const auto ws = p.open_workspace(case_ref);
            Json out{{"case_id", ws.case_id()}, {"workspace", ws.dir().string()}};
            for (const auto s : pipeline::kAllStages) {
                out["stages"][std::string(pipeline::to_string(s))] = std::string(pipeline::to_string(p.freshness(ws, s)));
            }
            std::cout << out.dump(2) << "\n";
            return 0;
        }
        if (score->parsed()) {
            const auto cfg = load_config();
            auto gateway = llm::LlmGateway(cfg.make_backend(), cfg.gateway_options()).with_stage("eval");
            const auto s = checkeval::score_pair(read_file(reference), read_file(candidate), gateway);
            std::cout << Json(s).dump(2) << "\n";
            return 0;
        }
        if (batch->parsed()) {
            const auto cfg = load_config();
            llm::LlmGateway gateway(cfg.make_backend(), cfg.gateway_options());
            auto eval_gateway = gateway.with_stage("eval");
            fs::create_directories(out_dir);
            std::ifstream in(pairs);
            if (!in) throw Error(ErrorKind::IoError, "cannot open " + pairs);
            std::string line;
            std::size_t n = 0, failed = 0;
            while (std::getline(in, line)) {
                if (text::trim(line).empty()) continue;
                ++n;
                const Json row = Json::parse(line);
                const std::string id = row.contains("id") ? (row["id"].is_string() ? row["id"].get<std::string>()
                                                                                   : row["id"].dump())
                                                          : std::to_string(n);
                try {
                    const auto s = checkeval::score_pair(text_or_file(row, "reference"), text_or_file(row, "candidate"),
                                                         eval_gateway);
                    write_json_atomic(fs::path(out_dir) / (pipeline::CaseWorkspace::sanitize(id) + ".json"),
                                      Json{{"id", id}, {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}});
                } catch (const Error& e) {
                    ++failed;
                    std::cerr << "warning: pair " << id << " skipped: " << e.what() << "\n";
                }
            }
            std::cout << Json{{"pairs", n}, {"scored", n - failed}, {"failed", failed}}.dump(2) << "\n";
            return 0;
        }
        if (aggregate->parsed()) {
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(scores_dir)) {
                if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
            }
            std::sort(files.begin(), files.end());
            std::vector<checkeval::EvalScores> scores;
            for (const auto& f : files) scores.push_back(read_json_file(f).get<checkeval::EvalScores>());
            std::cout << Json(checkeval::aggregate_stats(scores)).dump(2) << "\n";
            return 0;
        }
        if (bench->parsed()) {
            const auto cfg = load_config();
            llm::LlmGateway gateway(cfg.make_backend(), cfg.gateway_options());
            auto eval_gateway = gateway.with_stage("eval");
            const auto rows = checkeval::load_benchmark(dataset);
            const auto result = checkeval::benchmark_harness(rows, eval_gateway, checkeval::metric_from_string(metric));
            for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
            std::cout << Json(result).dump(2) << "\n";
            return 0;
        }
        if (vbuild->parsed()) {
            const auto schema = schema_path.empty() ? extraction::FormSchema::default_schema()
                                                    : extraction::FormSchema::from_json(read_json_file(schema_path));
            const auto vconfig = vconfig_path.empty() ? validation::ValidationConfig::defaults()
                                                      : validation::ValidationConfig::from_json(read_json_file(vconfig_path));
            std::optional<llm::LlmGateway> gateway;
            validation::BasicInfoExtractor extractor = validation::line_basic_info_extractor(schema);
            if (use_llm) {
                const auto cfg = load_config();
                gateway.emplace(llm::LlmGateway(cfg.make_backend(), cfg.gateway_options()).with_stage("validation"));
                extractor = validation::llm_basic_info_extractor(schema, *gateway);
            }
            const auto table =
                validation::build_validation_table(validation::load_instructions(docs_dir), extractor, vconfig);
            write_file_atomic(table_out, validation::to_jsonl(table.records));
            if (!csv_out.empty()) write_file_atomic(csv_out, validation::labels_csv(table.records));
            Json errors = Json::array();
            for (const auto& e : table.errors) {
                errors.push_back(Json{{"case_id", e.case_id}, {"kind", e.kind}, {"message", e.message}});
            }
            for (const auto& w : table.warnings) std::cerr << "warning: " << w << "\n";
            std::cout << Json{{"records", table.records.size()}, {"errors", errors}}.dump(2) << "\n";
            return 0;
        }
        if (serve->parsed()) {
            const auto [host, port] = split_addr(addr);
            pipeline::CaseService service(load_config());
            std::cerr << "listening on " << host << ":" << port << "\n";
            service.listen(host, port);
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    }
    return 0;
}
