#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "casework/service.hpp"

#include "casework/error.hpp"
#include "casework/ingest.hpp"
#include "casework/pipeline.hpp"

#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <thread>

namespace casework::pipeline {

namespace {

struct CaseState {
    std::string case_id;
    std::string status = "queued"; // queued | running | completed | failed
    std::optional<Json> report;
    std::string error;
    std::shared_ptr<std::mutex> mutex = std::make_shared<std::mutex>();
};

void send_json(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(2) + "\n", "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, Json{{"error", message}});
}

int http_status(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::NotFound:
    case ErrorKind::MissingStage: return 404;
    case ErrorKind::Locked:
    case ErrorKind::StaleUpstream: return 409;
    case ErrorKind::ParseError:
    case ErrorKind::PreconditionViolation:
    case ErrorKind::IoError: return 400;
    default: return 500;
    }
}

} // namespace

struct CaseService::Impl {
    Pipeline pipeline;
    std::string api_token;
    httplib::Server server;
    std::thread server_thread;

    std::mutex mutex;
    std::condition_variable cv;
    std::deque<std::function<void()>> queue;
    std::size_t active = 0;
    bool stopping = false;
    std::vector<std::thread> workers;
    std::map<std::string, CaseState> cases; // keyed by workspace name

    Impl(PipelineConfig config, std::shared_ptr<llm::LlmBackend> backend)
        : pipeline(config, std::move(backend)) {
        if (!config.api_token_env.empty()) {
            if (const char* t = std::getenv(config.api_token_env.c_str()); t != nullptr) api_token = t;
        }
        for (std::size_t i = 0; i < config.workers; ++i) {
            workers.emplace_back([this] { work(); });
        }
        routes();
    }

    ~Impl() {
        {
            std::lock_guard lock(mutex);
            stopping = true;
        }
        cv.notify_all();
        for (auto& w : workers) w.join();
    }

    void work() {
        for (;;) {
            std::function<void()> job;
            {
                std::unique_lock lock(mutex);
                cv.wait(lock, [&] { return stopping || !queue.empty(); });
                if (queue.empty()) return;
                job = std::move(queue.front());
                queue.pop_front();
                ++active;
            }
            job();
            {
                std::lock_guard lock(mutex);
                --active;
            }
            cv.notify_all();
        }
    }

    void enqueue(const std::string& key, std::function<RunReport()> task) {
        std::shared_ptr<std::mutex> case_mutex;
        {
            std::lock_guard lock(mutex);
            auto& st = cases[key];
            st.status = "queued";
            case_mutex = st.mutex;
            queue.push_back([this, key, case_mutex, task = std::move(task)] {
                std::lock_guard case_lock(*case_mutex);
                set_status(key, "running", std::nullopt, "");
                try {
                    const RunReport r = task();
                    set_status(key, r.ok() ? "completed" : "failed", r.to_json(),
                               r.ok() ? "" : "stage " + std::string(to_string(*r.failed_stage)) + " failed");
                } catch (const std::exception& e) {
                    set_status(key, "failed", std::nullopt, e.what());
                }
            });
        }
        cv.notify_all();
    }

    void set_status(const std::string& key, const std::string& status, std::optional<Json> report,
                    const std::string& error) {
        std::lock_guard lock(mutex);
        auto& st = cases[key];
        st.status = status;
        if (report) st.report = std::move(report);
        st.error = error;
    }

    // Known case: either submitted here or present on disk.
    std::optional<CaseWorkspace> find_case(const std::string& id) {
        const std::string key = CaseWorkspace::sanitize(id);
        {
            std::lock_guard lock(mutex);
            if (cases.count(key)) return pipeline.workspace_for(id);
        }
        const CaseWorkspace ws = pipeline.workspace_for(id);
        if (ws.exists()) return ws;
        return std::nullopt;
    }

    bool authorized(const httplib::Request& req, httplib::Response& res) {
        if (api_token.empty()) return true;
        if (req.get_header_value("Authorization") == "Bearer " + api_token) return true;
        send_error(res, 401, "missing or invalid API token");
        return false;
    }

    template <typename Handler>
    httplib::Server::Handler guarded(Handler handler) {
        return [this, handler](const httplib::Request& req, httplib::Response& res) {
            if (!authorized(req, res)) return;
            try {
                handler(req, res);
            } catch (const Error& e) {
                send_error(res, http_status(e.kind()), e.what());
            } catch (const std::exception& e) {
                send_error(res, 500, e.what());
            }
        };
    }

    void routes() {
        server.Post("/cases", guarded([this](const httplib::Request& req, httplib::Response& res) {
            Json body;
            try {
                body = Json::parse(req.body);
            } catch (const Json::exception&) {
                return send_error(res, 400, "request body is not JSON");
            }
            if (!body.is_object() || !body.contains("bundle_path") || !body["bundle_path"].is_string()) {
                return send_error(res, 400, "expected {\"bundle_path\": string}");
            }
            const std::filesystem::path bundle_path = body["bundle_path"].get<std::string>();
            std::string case_id;
            try {
                case_id = ingest::load_bundle(bundle_path).case_id;
            } catch (const Error& e) {
                return send_error(res, 400, e.what());
            }
            const std::string key = CaseWorkspace::sanitize(case_id);
            {
                std::lock_guard lock(mutex);
                cases[key].case_id = case_id;
            }
            enqueue(key, [this, bundle_path] { return pipeline.run_case(bundle_path); });
            send_json(res, 202, Json{{"case_id", case_id}, {"workspace", key}, {"status", "queued"}});
        }));

        server.Get(R"(/cases/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            const auto ws = find_case(id);
            if (!ws) return send_error(res, 404, "unknown case '" + id + "'");
            Json out{{"case_id", id}};
            {
                std::lock_guard lock(mutex);
                const auto it = cases.find(CaseWorkspace::sanitize(id));
                if (it != cases.end()) {
                    out["status"] = it->second.status;
                    if (!it->second.error.empty()) out["error"] = it->second.error;
                } else {
                    out["status"] = "idle";
                }
            }
            if (ws->exists()) {
                out["case_id"] = ws->case_id();
                Json stages = Json::object();
                for (const Stage s : kAllStages) {
                    stages[std::string(to_string(s))] = std::string(to_string(pipeline.freshness(*ws, s)));
                }
                out["stages"] = std::move(stages);
            }
            send_json(res, 200, out);
        }));

        server.Get(R"(/cases/([^/]+)/stages/([^/]+))",
                   guarded([this](const httplib::Request& req, httplib::Response& res) {
                       const auto ws = find_case(req.matches[1]);
                       if (!ws) return send_error(res, 404, "unknown case");
                       const Stage stage = stage_from_string(std::string(req.matches[2]));
                       const auto env = ws->read_stage(stage);
                       if (!env) return send_error(res, 404, "stage has no output yet");
                       send_json(res, 200, *env);
                   }));

        server.Post(R"(/cases/([^/]+)/stages/([^/]+)/rerun)",
                    guarded([this](const httplib::Request& req, httplib::Response& res) {
                        const auto ws = find_case(req.matches[1]);
                        if (!ws || !ws->exists()) return send_error(res, 404, "unknown case");
                        const Stage stage = stage_from_string(std::string(req.matches[2]));
                        const std::string key = ws->dir().filename().string();
                        enqueue(key, [this, w = *ws, stage] { return pipeline.resume_stage(w, stage); });
                        send_json(res, 202, Json{{"status", "queued"}, {"stage", std::string(to_string(stage))}});
                    }));

        server.Post(R"(/cases/([^/]+)/sections/([^/]+)/regenerate)",
                    guarded([this](const httplib::Request& req, httplib::Response& res) {
                        const auto ws = find_case(req.matches[1]);
                        if (!ws || !ws->exists()) return send_error(res, 404, "unknown case");
                        recommendations::SectionId section;
                        try {
                            section = recommendations::section_from_string(std::string(req.matches[2]));
                        } catch (const Error& e) {
                            return send_error(res, 404, e.what());
                        }
                        const std::string key = ws->dir().filename().string();
                        enqueue(key, [this, w = *ws, section] { return pipeline.regenerate_section(w, section); });
                        send_json(res, 202, Json{{"status", "queued"},
                                                 {"section", std::string(recommendations::to_string(section))}});
                    }));

        server.Get(R"(/cases/([^/]+)/instruction)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const auto ws = find_case(req.matches[1]);
            if (!ws) return send_error(res, 404, "unknown case");
            if (!std::filesystem::is_regular_file(ws->instruction_md())) {
                return send_error(res, 404, "no instruction draft yet");
            }
            res.status = 200;
            res.set_content(read_file(ws->instruction_md()), "text/markdown; charset=utf-8");
        }));

        server.Get(R"(/cases/([^/]+)/report)", guarded([this](const httplib::Request& req, httplib::Response& res) {
            const std::string key = CaseWorkspace::sanitize(std::string(req.matches[1]));
            std::lock_guard lock(mutex);
            const auto it = cases.find(key);
            if (it == cases.end()) return send_error(res, 404, "unknown case");
            if (!it->second.report) return send_error(res, 404, "no run report yet");
            send_json(res, 200, *it->second.report);
        }));
    }
};

CaseService::CaseService(PipelineConfig config, std::shared_ptr<llm::LlmBackend> backend)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(backend))) {}

CaseService::~CaseService() { stop(); }

int CaseService::start(const std::string& host, int port) {
    const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) {
        throw Error(ErrorKind::IoError, "cannot bind " + host + ":" + std::to_string(port));
    }
    impl_->server_thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void CaseService::listen(const std::string& host, int port) {
    if (!impl_->server.listen(host, port)) {
        throw Error(ErrorKind::IoError, "cannot listen on " + host + ":" + std::to_string(port));
    }
}

void CaseService::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->server_thread.joinable()) impl_->server_thread.join();
}

void CaseService::wait_idle() {
    std::unique_lock lock(impl_->mutex);
    impl_->cv.wait(lock, [&] { return impl_->queue.empty() && impl_->active == 0; });
}

} // namespace casework::pipeline
