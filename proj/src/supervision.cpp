#include "dsa/supervision.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>

#include "dsa/errors.hpp"

namespace dsa::supervision {

using nlohmann::json;

namespace {

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

}  // namespace

std::string to_string(Agent a) {
    switch (a) {
        case Agent::Demand: return "demand";
        case Agent::Process: return "process";
        case Agent::Label: return "label";
        case Agent::Supervisor: return "supervisor";
    }
    return "supervisor";
}

std::string to_string(Level l) {
    switch (l) {
        case Level::Info: return "info";
        case Level::Warn: return "warn";
        case Level::Error: return "error";
    }
    return "info";
}

std::string to_string(Stage s) {
    switch (s) {
        case Stage::Collect: return "collect";
        case Stage::Analyze: return "analyze";
        case Stage::Optimize: return "optimize";
        case Stage::Label: return "label";
        case Stage::Finalize: return "finalize";
    }
    return "collect";
}

std::string to_string(FailureCategory c) {
    switch (c) {
        case FailureCategory::DecodeFailure: return "decode_failure";
        case FailureCategory::BackendUnavailable: return "backend_unavailable";
        case FailureCategory::MalformedBackendReply: return "malformed_backend_reply";
        case FailureCategory::ToolError: return "tool_error";
        case FailureCategory::SchemaViolation: return "schema_violation";
        case FailureCategory::Crash: return "crash";
        case FailureCategory::Unknown: return "unknown";
    }
    return "unknown";
}

std::string to_string(Resolution r) {
    switch (r) {
        case Resolution::Skip: return "Skip";
        case Resolution::Retry: return "Retry";
        case Resolution::Restart: return "Restart";
        case Resolution::Abort: return "Abort";
    }
    return "Abort";
}

namespace {

std::optional<Stage> stage_from_string(const std::string& s) {
    for (Stage st : kAllStages)
        if (to_string(st) == s) return st;
    return std::nullopt;
}

std::optional<Resolution> resolution_from_string(const std::string& s) {
    if (s == "Skip" || s == "skip") return Resolution::Skip;
    if (s == "Retry" || s == "retry") return Resolution::Retry;
    if (s == "Restart" || s == "restart") return Resolution::Restart;
    if (s == "Abort" || s == "abort") return Resolution::Abort;
    return std::nullopt;
}

}  // namespace

// ---------------------------------------------------------------------------
// event log
// ---------------------------------------------------------------------------

EventLog::~EventLog() {
    if (fd_ >= 0) ::close(fd_);
}

void EventLog::open(const std::filesystem::path& path) {
    path_ = path;
    // continue numbering from the existing log
    next_seq_ = 1;
    if (std::filesystem::exists(path)) {
        for (const auto& e : replay(path)) next_seq_ = e.seq + 1;
    }
    fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
    if (fd_ < 0) throw LogUnwritable("cannot open event log: " + path.string());
}

std::uint64_t EventLog::record(Agent agent, Level level, const std::string& kind, json payload) {
    std::lock_guard<std::mutex> lock(mu_);
    if (fd_ < 0) throw LogUnwritable("event log not open");
    const std::uint64_t seq = next_seq_++;
    json line{{"seq", seq},         {"wall_ms", now_ms()},
              {"agent", to_string(agent)}, {"level", to_string(level)},
              {"kind", kind},       {"payload", std::move(payload)}};
    std::string text = line.dump();
    text += '\n';
    const char* p = text.data();
    std::size_t left = text.size();
    while (left > 0) {
        const ssize_t n = ::write(fd_, p, left);
        if (n < 0) throw LogUnwritable("event log write failed");
        p += n;
        left -= static_cast<std::size_t>(n);
    }
    if (::fsync(fd_) != 0) throw LogUnwritable("event log fsync failed");
    return seq;
}

std::vector<Event> EventLog::replay(const std::filesystem::path& path) {
    std::vector<Event> out;
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json doc = json::parse(line, nullptr, false);
        if (doc.is_discarded()) continue;  // torn tail write after a crash
        Event e;
        e.seq = doc.value("seq", 0ULL);
        e.wall_ms = doc.value("wall_ms", 0LL);
        const std::string agent = doc.value("agent", "supervisor");
        e.agent = agent == "demand"    ? Agent::Demand
                  : agent == "process" ? Agent::Process
                  : agent == "label"   ? Agent::Label
                                       : Agent::Supervisor;
        const std::string level = doc.value("level", "info");
        e.level = level == "warn" ? Level::Warn : level == "error" ? Level::Error : Level::Info;
        e.kind = doc.value("kind", "");
        e.payload = doc.value("payload", json::object());
        out.push_back(std::move(e));
    }
    return out;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

CheckpointStore::CheckpointStore(std::filesystem::path workspace)
    : path_(std::move(workspace)) {
    path_ /= "checkpoint.json";
}

void CheckpointStore::write(const Checkpoint& cp) {
    json cursor = json::object();
    for (const auto& [stage, idx] : cp.cursor) cursor[to_string(stage)] = idx;
    const json doc{{"run_id", cp.run_id},       {"stage", to_string(cp.stage)},
                   {"cursor", cursor},          {"quota", cp.quota},
                   {"manifest_hash", cp.manifest_hash}, {"extra", cp.extra}};

    const std::filesystem::path tmp = path_.string() + ".tmp";
    {
        const std::string text = doc.dump(2);
        const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        if (fd < 0) throw LogUnwritable("cannot write checkpoint temp");
        if (::write(fd, text.data(), text.size()) != static_cast<ssize_t>(text.size())) {
            ::close(fd);
            throw LogUnwritable("checkpoint write failed");
        }
        ::fsync(fd);
        ::close(fd);
    }
    std::error_code ec;
    if (std::filesystem::exists(path_)) {
        std::filesystem::copy_file(path_, path_.string() + ".prev",
                                   std::filesystem::copy_options::overwrite_existing, ec);
    }
    std::filesystem::rename(tmp, path_);  // atomically replaces the latest
}

std::optional<Checkpoint> CheckpointStore::load() const {
    std::ifstream in(path_);
    if (!in) return std::nullopt;
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) return std::nullopt;
    Checkpoint cp;
    cp.run_id = doc.value("run_id", "");
    cp.stage = stage_from_string(doc.value("stage", "collect")).value_or(Stage::Collect);
    const json cursor = doc.value("cursor", json::object());
    for (const auto& [key, value] : cursor.items())
        if (auto st = stage_from_string(key)) cp.cursor[*st] = value;
    cp.quota = doc.value("quota", json::object());
    cp.manifest_hash = doc.value("manifest_hash", "");
    cp.extra = doc.value("extra", json::object());
    return cp;
}

// ---------------------------------------------------------------------------
// commit protocol + fault injection
// ---------------------------------------------------------------------------

namespace {

std::atomic<long> g_commit_count{0};

long crash_after_commits() {
    static const long v = [] {
        const char* s = std::getenv("DATASETAGENT_TEST_CRASH_AFTER_COMMITS");
        return s ? std::atol(s) : 0L;
    }();
    return v;
}

bool crash_pre_rename() {
    static const bool v = [] {
        const char* s = std::getenv("DATASETAGENT_TEST_CRASH_MODE");
        return s && std::string(s) == "pre_rename";
    }();
    return v;
}

}  // namespace

void crash_hook_after_commit() {
    const long limit = crash_after_commits();
    if (limit <= 0) return;
    if (g_commit_count.fetch_add(1) + 1 >= limit) ::_exit(137);  // simulated hard crash
}

void crash_hook_reset() { g_commit_count.store(0); }

void commit_file(EventLog& log, Agent agent, const std::filesystem::path& final_path,
                 std::string_view bytes, json payload) {
    const std::filesystem::path tmp = final_path.string() + ".tmp";
    std::filesystem::create_directories(final_path.parent_path());
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0) throw LogUnwritable("cannot open temp artifact: " + tmp.string());
    std::size_t off = 0;
    while (off < bytes.size()) {
        const ssize_t n = ::write(fd, bytes.data() + off, bytes.size() - off);
        if (n < 0) {
            ::close(fd);
            throw LogUnwritable("artifact write failed: " + tmp.string());
        }
        off += static_cast<std::size_t>(n);
    }
    ::fsync(fd);
    ::close(fd);

    payload["path"] = final_path.string();
    log.record(agent, Level::Info, "commit", std::move(payload));
    if (crash_pre_rename() ) crash_hook_after_commit();
    std::filesystem::rename(tmp, final_path);
    if (!crash_pre_rename()) crash_hook_after_commit();
}

// ---------------------------------------------------------------------------
// diagnosis
// ---------------------------------------------------------------------------

Resolution Diagnostics::diagnose(const FailureRecord& failure,
                                 const gateway::TextModelHandle* backend,
                                 const std::string& diagnosis_prompt) {
    if (failure.category != FailureCategory::BackendUnavailable) backend_unavailable_streak_ = 0;

    switch (failure.category) {
        case FailureCategory::DecodeFailure:
            return Resolution::Skip;
        case FailureCategory::BackendUnavailable:
            // retry with backoff up to 3 consecutive failures, then abort
            if (++backend_unavailable_streak_ > 3) return Resolution::Abort;
            return Resolution::Retry;
        case FailureCategory::MalformedBackendReply: {
            const std::string key =
                failure.context.is_object() ? failure.context.value("item", "") : "";
            if (++malformed_retries_[key] > 1) return Resolution::Skip;
            return Resolution::Retry;
        }
        case FailureCategory::ToolError:
            return Resolution::Restart;
        case FailureCategory::Crash:
            return Resolution::Restart;  // resume from the last valid checkpoint
        case FailureCategory::SchemaViolation:
        case FailureCategory::Unknown:
            break;
    }

    // no rule matched: consult the backend, confined to the fixed set
    if (backend && backend->transport) {
        try {
            std::string prompt = diagnosis_prompt.empty()
                                     ? "FAILURE CONTEXT:\n" + failure.context.dump()
                                     : diagnosis_prompt;
            const std::string reply = gateway::complete_text(*backend, prompt);
            const json doc = json::parse(reply, nullptr, false);
            if (doc.is_object() && doc.contains("resolution"))
                if (auto r = resolution_from_string(doc["resolution"])) return *r;
        } catch (const PipelineError&) {
            // diagnosis backend itself failing must not wedge recovery
        }
    }
    return Resolution::Skip;
}

// ---------------------------------------------------------------------------
// scheduling
// ---------------------------------------------------------------------------

std::vector<int> schedule(std::span<const std::size_t> queue_depths, int worker_budget) {
    if (worker_budget < 1) throw PipelineError("schedule: worker budget must be >= 1");
    const std::size_t n = queue_depths.size();
    std::vector<int> out(n, 0);
    std::vector<std::size_t> active;
    std::size_t total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (queue_depths[i] > 0) {
            active.push_back(i);
            total += queue_depths[i];
        }
    }
    if (active.empty()) return out;

    // depth order, stable on ties
    std::stable_sort(active.begin(), active.end(), [&](std::size_t a, std::size_t b) {
        return queue_depths[a] > queue_depths[b];
    });

    if (worker_budget < static_cast<int>(active.size())) {
        // not enough for one each: deepest queues first
        for (int w = 0; w < worker_budget; ++w) out[active[w]] = 1;
        return out;
    }

    // proportional floors, remainders by largest fraction
    int assigned = 0;
    std::vector<std::pair<double, std::size_t>> fractions;
    for (std::size_t idx : active) {
        const double share =
            static_cast<double>(worker_budget) * static_cast<double>(queue_depths[idx]) /
            static_cast<double>(total);
        out[idx] = static_cast<int>(share);
        assigned += out[idx];
        fractions.emplace_back(share - out[idx], idx);
    }
    std::stable_sort(fractions.begin(), fractions.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int i = 0; assigned < worker_budget; ++i, ++assigned)
        ++out[fractions[i % fractions.size()].second];

    // every non-empty stage keeps at least one worker
    for (std::size_t idx : active) {
        if (out[idx] > 0) continue;
        for (std::size_t donor : active) {
            if (out[donor] > 1) {
                --out[donor];
                ++out[idx];
                break;
            }
        }
    }
    return out;
}

}  // namespace dsa::supervision
