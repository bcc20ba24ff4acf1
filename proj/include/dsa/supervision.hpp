#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dsa/gateway.hpp"

// The supervisor: append-only event log, atomic checkpoints, failure
// diagnosis with a fixed resolution set, and backlog-proportional worker
// scheduling. One supervisor owns the log and checkpoints; commits are
// serialized through it.
namespace dsa::supervision {

enum class Agent { Demand, Process, Label, Supervisor };
enum class Level { Info, Warn, Error };

std::string to_string(Agent a);
std::string to_string(Level l);

struct Event {
    std::uint64_t seq = 0;
    std::int64_t wall_ms = 0;
    Agent agent = Agent::Supervisor;
    Level level = Level::Info;
    std::string kind;
    nlohmann::json payload;
};

class EventLog {
public:
    EventLog() = default;
    ~EventLog();
    EventLog(const EventLog&) = delete;
    EventLog& operator=(const EventLog&) = delete;

    // creates or continues an existing log; seq numbering resumes
    void open(const std::filesystem::path& path);
    bool is_open() const { return fd_ >= 0; }
    // durably appended (fsync) before returning the assigned seq
    std::uint64_t record(Agent agent, Level level, const std::string& kind,
                         nlohmann::json payload = nlohmann::json::object());
    std::uint64_t next_seq() const { return next_seq_; }
    const std::filesystem::path& path() const { return path_; }

    static std::vector<Event> replay(const std::filesystem::path& path);

private:
    int fd_ = -1;
    std::uint64_t next_seq_ = 1;
    std::filesystem::path path_;
    std::mutex mu_;
};

enum class Stage { Collect, Analyze, Optimize, Label, Finalize };
std::string to_string(Stage s);
constexpr std::array<Stage, 5> kAllStages = {Stage::Collect, Stage::Analyze, Stage::Optimize,
                                             Stage::Label, Stage::Finalize};

struct Checkpoint {
    std::string run_id;
    Stage stage = Stage::Collect;
    std::map<Stage, std::int64_t> cursor;  // last committed ordinal, -1 = none
    nlohmann::json quota = nlohmann::json::object();
    std::string manifest_hash;  // hash over the committed artifact set
    nlohmann::json extra = nlohmann::json::object();

    std::int64_t cursor_for(Stage s) const {
        auto it = cursor.find(s);
        return it == cursor.end() ? -1 : it->second;
    }
};

class CheckpointStore {
public:
    explicit CheckpointStore(std::filesystem::path workspace);
    // atomic: temp write + fsync + rename; previous checkpoint kept as .prev
    void write(const Checkpoint& cp);
    std::optional<Checkpoint> load() const;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

// Commit protocol: write temp, fsync, append Commit event, rename.
// The checkpoint cursor only ever advances past committed items.
void commit_file(EventLog& log, Agent agent, const std::filesystem::path& final_path,
                 std::string_view bytes, nlohmann::json payload);

// test-only fault injection, enabled by DATASETAGENT_TEST_CRASH_AFTER_COMMITS
void crash_hook_after_commit();
void crash_hook_reset();

enum class FailureCategory {
    DecodeFailure,
    BackendUnavailable,
    MalformedBackendReply,
    ToolError,
    SchemaViolation,
    Crash,
    Unknown
};
enum class Resolution { Skip, Retry, Restart, Abort };

std::string to_string(FailureCategory c);
std::string to_string(Resolution r);

struct FailureRecord {
    std::uint64_t event_seq = 0;
    FailureCategory category = FailureCategory::Unknown;
    nlohmann::json context = nlohmann::json::object();
};

// Rule table first; the text backend is consulted only for categories the
// rules do not cover, and its advice is confined to the four resolutions.
class Diagnostics {
public:
    Resolution diagnose(const FailureRecord& failure,
                        const gateway::TextModelHandle* backend = nullptr,
                        const std::string& diagnosis_prompt = "");
    // a successful retry ends the consecutive-failure streak
    void note_success() { backend_unavailable_streak_ = 0; }
    int consecutive_backend_failures() const { return backend_unavailable_streak_; }

private:
    int backend_unavailable_streak_ = 0;
    std::map<std::string, int> malformed_retries_;
};

// Workers proportional to queue depth; every non-empty stage gets at least
// one worker while the budget allows. Called at checkpoint boundaries.
std::vector<int> schedule(std::span<const std::size_t> queue_depths, int worker_budget);

}  // namespace dsa::supervision
