#include "dsa/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dsa/analysis.hpp"
#include "dsa/errors.hpp"
#include "dsa/image_io.hpp"
#include "dsa/labeling.hpp"
#include "dsa/metrics.hpp"
#include "dsa/parallel.hpp"
#include "dsa/report.hpp"
#include "dsa/rle.hpp"
#include "dsa/rng.hpp"
#include "dsa/sha256.hpp"
#include "dsa/supervision.hpp"
#include "dsa/toolpkg.hpp"

namespace dsa::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;
using supervision::Agent;
using supervision::Level;
using supervision::Stage;

namespace {

// ---------------------------------------------------------------------------
// workspace layout
// ---------------------------------------------------------------------------

struct Paths {
    fs::path ws;
    fs::path run_log;
    fs::path spec_file;
    fs::path collected;
    fs::path analysis;
    fs::path optimized;
    fs::path labelmeta;
    fs::path out;

    explicit Paths(const fs::path& workspace)
        : ws(workspace),
          run_log(workspace / "run.log"),
          spec_file(workspace / "spec.json"),
          collected(workspace / "staging" / "collected"),
          analysis(workspace / "staging" / "analysis"),
          optimized(workspace / "staging" / "optimized"),
          labelmeta(workspace / "staging" / "labelmeta"),
          out(workspace / "out") {}

    void make_dirs() const {
        fs::create_directories(collected);
        fs::create_directories(analysis);
        fs::create_directories(optimized);
        fs::create_directories(labelmeta);
        fs::create_directories(out);
    }
};

std::string ord_name(std::int64_t ordinal, const std::string& id, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06lld_", static_cast<long long>(ordinal));
    return std::string(buf) + id + ext;
}

// files named NNNNNN_<id>.<ext>; returns (ordinal, path) sorted by ordinal
std::vector<std::pair<std::int64_t, fs::path>> scan_ordinals(const fs::path& dir,
                                                             const std::string& ext) {
    std::vector<std::pair<std::int64_t, fs::path>> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string name = e.path().filename().string();
        if (name.size() < 8 || name[6] != '_') continue;
        if (!ext.empty() && e.path().extension() != ext) continue;
        out.emplace_back(std::atoll(name.substr(0, 6).c_str()), e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

json read_json_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw PipelineError("missing file: " + p.string());
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw PipelineError("bad json: " + p.string());
    return doc;
}

void write_text_file(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw PipelineError("cannot write: " + p.string());
}

// ---------------------------------------------------------------------------
// engine
// ---------------------------------------------------------------------------

struct CollectedItem {
    std::int64_t ordinal = 0;
    std::string id;
    std::string source_id;
    std::string origin_uri;
    std::string class_hint;
    fs::path png;
};

struct AcceptedItem {
    std::int64_t opt_ordinal = 0;      // position in the accepted sequence
    std::int64_t analyze_ordinal = 0;  // back-reference into collected/analysis
};

struct Stats {
    std::int64_t consumed = 0;   // raw source entries taken from the handle
    std::int64_t collected = 0;  // decode attempts (decoded + skipped)
    std::int64_t skipped = 0;    // decode failures
    std::int64_t rejected = 0;   // failed a gate, quota, or labeling
    std::int64_t accepted = 0;   // final dataset entries

    json to_json() const {
        return json{{"consumed", consumed},
                    {"collected", collected},
                    {"skipped", skipped},
                    {"rejected", rejected},
                    {"accepted", accepted}};
    }
    void from_json(const json& j) {
        consumed = j.value("consumed", 0LL);
        collected = j.value("collected", 0LL);
        skipped = j.value("skipped", 0LL);
        rejected = j.value("rejected", 0LL);
        accepted = j.value("accepted", 0LL);
    }
};

class Engine {
public:
    Engine(const RunConfig& cfg, intake::DatasetSpec spec, gateway::Gateway& gw, std::ostream& out)
        : cfg_(cfg), spec_(std::move(spec)), gw_(gw), console_(out), paths_(cfg.workspace) {}

    int run(bool resuming);

private:
    // setup / resume
    void fresh_start();
    void resume_state();
    void verify_workspace(const supervision::Checkpoint& cp);
    std::string committed_set_hash() const;
    void open_source();

    // stages
    bool collect_active() const;
    void run_collect(int batch, int threads);
    void run_analyze(int batch, int threads);
    void run_optimize(int batch, int threads);
    void run_label(int batch, int threads);
    void finalize();

    // helpers
    void write_checkpoint(Stage stage);
    void maybe_checkpoint(Stage stage);
    json quota_to_json() const;
    void quota_from_json(const json& j);
    acquisition::ImageRecord record_for(const CollectedItem& item, const fs::path& png) const;
    supervision::Resolution handle_failure(supervision::FailureCategory cat, const json& ctx);

    const RunConfig& cfg_;
    intake::DatasetSpec spec_;
    gateway::Gateway& gw_;
    std::ostream& console_;
    Paths paths_;

    supervision::EventLog log_;
    std::unique_ptr<supervision::CheckpointStore> cps_;
    supervision::Diagnostics diag_;
    intake::PromptLibrary prompts_;

    std::unique_ptr<acquisition::SourceHandle> source_;
    bool source_exhausted_ = false;

    acquisition::QuotaState quota_;          // accept quota (analyze stage)
    acquisition::QuotaState collect_quota_;  // fetch quota with overcollect headroom

    std::vector<CollectedItem> items_;    // analyze inputs, by collect ordinal
    std::vector<AcceptedItem> accepted_;  // optimize/label inputs

    std::int64_t cursor_collect_ = -1;
    std::int64_t cursor_analyze_ = -1;
    std::int64_t cursor_optimize_ = -1;
    std::int64_t cursor_label_ = -1;
    bool finalized_ = false;

    Stats stats_;
    int commits_since_checkpoint_ = 0;
    std::chrono::steady_clock::time_point last_checkpoint_ = std::chrono::steady_clock::now();
    std::string summary_;
};

json Engine::quota_to_json() const {
    json q = json::object();
    for (const auto& [name, c] : quota_.classes)
        q[name] = {{"target", c.target},
                   {"accepted", c.accepted},
                   {"rejected", c.rejected},
                   {"collect_seen", collect_quota_.classes.count(name)
                                        ? collect_quota_.classes.at(name).accepted
                                        : 0}};
    return q;
}

void Engine::quota_from_json(const json& j) {
    for (auto& [name, c] : quota_.classes) {
        if (!j.contains(name)) continue;
        c.target = j[name].value("target", c.target);
        c.accepted = j[name].value("accepted", 0ULL);
        c.rejected = j[name].value("rejected", 0ULL);
        if (collect_quota_.classes.count(name))
            collect_quota_.classes[name].accepted = j[name].value("collect_seen", 0ULL);
    }
}

acquisition::ImageRecord Engine::record_for(const CollectedItem& item, const fs::path& png) const {
    acquisition::ImageRecord rec;
    rec.id = item.id;
    rec.pixels = load_image(png);
    rec.source_id = item.source_id;
    rec.origin_uri = item.origin_uri;
    rec.class_hint = item.class_hint;
    return rec;
}

void Engine::fresh_start() {
    // a workspace holds exactly one run; stale artifacts would pollute the
    // output manifest
    if (fs::exists(paths_.spec_file) || fs::exists(paths_.ws / "checkpoint.json"))
        throw PipelineError("workspace already contains a run: " + paths_.ws.string() +
                            " (resume it or choose a fresh workspace)");
    paths_.make_dirs();
    log_.open(paths_.run_log);
    cps_ = std::make_unique<supervision::CheckpointStore>(paths_.ws);

    for (const auto& c : spec_.classes) {
        acquisition::ClassQuota q;
        q.target = c.target_count ? c.target_count : spec_.per_class_target;
        quota_.classes[c.name] = q;
        acquisition::ClassQuota cq;
        cq.target = static_cast<std::uint64_t>(
            std::ceil(static_cast<double>(q.target) * cfg_.overcollect_factor));
        collect_quota_.classes[c.name] = cq;
    }

    supervision::commit_file(log_, Agent::Demand, paths_.spec_file,
                             intake::spec_to_json(spec_).dump(2),
                             json{{"stage", "intake"}, {"run_id", cfg_.effective_run_id()}});
    log_.record(Agent::Demand, Level::Info, "intake",
                json{{"task", intake::to_string(spec_.task_kind)},
                     {"type", intake::to_string(spec_.task_type)},
                     {"classes", spec_.classes.size()}});
    write_checkpoint(Stage::Collect);
}

std::string Engine::committed_set_hash() const {
    // hash over the committed artifact set as defined by the cursors;
    // files written after the last checkpoint are redone on resume and
    // intentionally excluded
    std::vector<std::string> lines;
    auto add = [&](const fs::path& p) {
        if (fs::is_regular_file(p))
            lines.push_back(fs::relative(p, paths_.ws).string() + ":" + sha256_file_hex(p));
    };
    add(paths_.spec_file);
    for (const auto& [ord, p] : scan_ordinals(paths_.collected, ".png")) {
        if (ord > cursor_collect_) continue;
        add(p);
        add(fs::path(p).replace_extension(".json"));
    }
    for (const auto& [ord, p] : scan_ordinals(paths_.analysis, ".json"))
        if (ord <= cursor_analyze_) add(p);
    for (const auto& [ord, p] : scan_ordinals(paths_.optimized, ".png"))
        if (ord <= cursor_optimize_) add(p);
    for (const auto& [ord, p] : scan_ordinals(paths_.labelmeta, ".json")) {
        if (ord > cursor_label_) continue;
        add(p);
        const json meta = read_json_file(p);
        for (const auto& f : meta.value("files", json::array())) add(paths_.ws / f.get<std::string>());
    }
    if (finalized_ && fs::is_regular_file(paths_.out / "manifest.tsv"))
        add(paths_.out / "manifest.tsv");
    std::sort(lines.begin(), lines.end());
    std::string all;
    for (const auto& l : lines) {
        all += l;
        all += '\n';
    }
    return sha256_hex(all);
}

void Engine::verify_workspace(const supervision::Checkpoint& cp) {
    const std::string have = committed_set_hash();
    if (have != cp.manifest_hash)
        throw WorkspaceCorrupt("workspace hash mismatch: committed files were altered");
}

void Engine::resume_state() {
    paths_.make_dirs();
    log_.open(paths_.run_log);
    cps_ = std::make_unique<supervision::CheckpointStore>(paths_.ws);

    const auto cp = cps_->load();
    if (!cp) throw NoCheckpoint("no checkpoint in workspace " + paths_.ws.string());
    if (cp->run_id != cfg_.effective_run_id())
        throw NoCheckpoint("checkpoint belongs to run " + cp->run_id);

    cursor_collect_ = cp->cursor_for(Stage::Collect);
    cursor_analyze_ = cp->cursor_for(Stage::Analyze);
    cursor_optimize_ = cp->cursor_for(Stage::Optimize);
    cursor_label_ = cp->cursor_for(Stage::Label);
    finalized_ = cp->cursor_for(Stage::Finalize) >= 0;
    stats_.from_json(cp->extra.value("stats", json::object()));
    summary_ = cp->extra.value("summary", "");

    for (const auto& c : spec_.classes) {
        acquisition::ClassQuota q;
        q.target = c.target_count ? c.target_count : spec_.per_class_target;
        quota_.classes[c.name] = q;
        acquisition::ClassQuota cq;
        cq.target = static_cast<std::uint64_t>(
            std::ceil(static_cast<double>(q.target) * cfg_.overcollect_factor));
        collect_quota_.classes[c.name] = cq;
    }
    quota_from_json(cp->quota);

    verify_workspace(*cp);

    // rebuild stage inputs from the committed prefix
    for (const auto& [ord, p] : scan_ordinals(paths_.collected, ".png")) {
        if (ord > cursor_collect_) continue;
        const json meta = read_json_file(fs::path(p).replace_extension(".json"));
        CollectedItem item;
        item.ordinal = ord;
        item.id = meta.value("id", "");
        item.source_id = meta.value("source_id", "");
        item.origin_uri = meta.value("origin_uri", "");
        item.class_hint = meta.value("class_hint", "");
        item.png = p;
        items_.push_back(std::move(item));
    }
    std::int64_t opt_ord = 0;
    for (const auto& [ord, p] : scan_ordinals(paths_.analysis, ".json")) {
        if (ord > cursor_analyze_) continue;
        const json doc = read_json_file(p);
        if (doc.value("accepted", false)) accepted_.push_back({opt_ord++, ord});
    }

    log_.record(Agent::Supervisor, Level::Info, "resume",
                json{{"run_id", cp->run_id},
                     {"collect", cursor_collect_},
                     {"analyze", cursor_analyze_},
                     {"optimize", cursor_optimize_},
                     {"label", cursor_label_}});
}

void Engine::open_source() {
    source_ = acquisition::open_source(spec_.source);
    source_->skip(static_cast<std::size_t>(stats_.consumed));
}

bool Engine::collect_active() const {
    if (source_exhausted_) return false;
    if (quota_.all_satisfied()) return false;
    return true;
}

void Engine::write_checkpoint(Stage stage) {
    supervision::Checkpoint cp;
    cp.run_id = cfg_.effective_run_id();
    cp.stage = stage;
    cp.cursor[Stage::Collect] = cursor_collect_;
    cp.cursor[Stage::Analyze] = cursor_analyze_;
    cp.cursor[Stage::Optimize] = cursor_optimize_;
    cp.cursor[Stage::Label] = cursor_label_;
    cp.cursor[Stage::Finalize] = finalized_ ? 0 : -1;
    cp.quota = quota_to_json();
    cp.manifest_hash = committed_set_hash();
    cp.extra["stats"] = stats_.to_json();
    if (!summary_.empty()) cp.extra["summary"] = summary_;
    cps_->write(cp);
    log_.record(Agent::Supervisor, Level::Info, "checkpoint",
                json{{"stage", to_string(stage)}, {"cursor", cp.cursor_for(stage)}});
    commits_since_checkpoint_ = 0;
    last_checkpoint_ = std::chrono::steady_clock::now();
}

void Engine::maybe_checkpoint(Stage stage) {
    ++commits_since_checkpoint_;
    const auto elapsed =
        std::chrono::duration_cast<std::chrono::seconds>(std::chrono::steady_clock::now() -
                                                         last_checkpoint_)
            .count();
    if (commits_since_checkpoint_ >= cfg_.checkpoint_every_items ||
        elapsed >= cfg_.checkpoint_every_secs)
        write_checkpoint(stage);
}

supervision::Resolution Engine::handle_failure(supervision::FailureCategory cat, const json& ctx) {
    const std::uint64_t seq =
        log_.record(Agent::Supervisor, Level::Error, "failure",
                    json{{"category", supervision::to_string(cat)}, {"context", ctx}});
    supervision::FailureRecord fr{seq, cat, ctx};
    const auto res = diag_.diagnose(fr, &gw_.text, std::string());
    log_.record(Agent::Supervisor, Level::Info, "resolution",
                json{{"category", supervision::to_string(cat)},
                     {"resolution", supervision::to_string(res)},
                     {"context", ctx}});
    return res;
}

// --- collect -----------------------------------------------------------------

void Engine::run_collect(int batch, int /*threads*/) {
    // one record at a time so checkpointed `consumed` never runs ahead of a
    // committed record (skips are replayable; committed records are not)
    for (int i = 0; i < batch; ++i) {
        // fetch view: a class stops pulling when its accept quota is met or
        // its overcollect headroom is used up
        acquisition::QuotaState fetch_quota = collect_quota_;
        for (auto& [name, q] : fetch_quota.classes)
            if (quota_.classes.at(name).remaining() == 0) q.target = 0;

        std::vector<acquisition::SkipNote> skipped;
        auto records = acquisition::next_batch(*source_, fetch_quota, 1, &skipped);

        for (const auto& note : skipped) {
            ++stats_.collected;
            ++stats_.skipped;
            const json ctx{{"locator", note.locator}, {"reason", note.reason}};
            log_.record(Agent::Process, Level::Error, "decode_failed", ctx);
            handle_failure(supervision::FailureCategory::DecodeFailure, ctx);  // rule: Skip
        }

        if (records.empty()) {
            stats_.consumed = static_cast<std::int64_t>(source_->consumed());
            if (skipped.empty()) {
                source_exhausted_ = true;
                return;
            }
            continue;
        }

        auto& rec = records.front();
        const std::int64_t ordinal = static_cast<std::int64_t>(items_.size());
        // duplicate ids would collide in out/; suffix deterministically
        for (const auto& existing : items_) {
            if (existing.id == rec.id) {
                rec.id += "_" + std::to_string(ordinal);
                break;
            }
        }
        const fs::path png = paths_.collected / ord_name(ordinal, rec.id, ".png");
        const json meta{{"id", rec.id},
                        {"source_id", rec.source_id},
                        {"origin_uri", rec.origin_uri},
                        {"class_hint", rec.class_hint}};
        write_text_file(fs::path(png).replace_extension(".json"), meta.dump(2));
        const auto bytes = encode_png(rec.pixels);
        supervision::commit_file(
            log_, Agent::Process, png,
            std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
            json{{"stage", "collect"}, {"ordinal", ordinal}, {"id", rec.id}});
        ++stats_.collected;
        stats_.consumed = static_cast<std::int64_t>(source_->consumed());
        if (!rec.class_hint.empty() && collect_quota_.class_known(rec.class_hint))
            collect_quota_ = acquisition::update_quota(collect_quota_, rec.class_hint,
                                                       acquisition::Outcome::Accepted);

        CollectedItem item;
        item.ordinal = ordinal;
        item.id = rec.id;
        item.source_id = rec.source_id;
        item.origin_uri = rec.origin_uri;
        item.class_hint = rec.class_hint;
        item.png = png;
        items_.push_back(std::move(item));
        cursor_collect_ = ordinal;
        maybe_checkpoint(Stage::Collect);
    }
}

// --- analyze -----------------------------------------------------------------

namespace {

struct AnalyzeOut {
    bool failed = false;
    supervision::FailureCategory category = supervision::FailureCategory::Unknown;
    std::string error;
    json analysis_doc;
    bool accept = false;
    std::string reason;
    double alignment = 0.0;
    double risk = 0.0;
    double confidence = 0.0;
    std::string class_name;
};

}  // namespace

void Engine::run_analyze(int batch, int threads) {
    const std::int64_t from = cursor_analyze_ + 1;
    const std::int64_t to =
        std::min<std::int64_t>(from + batch, static_cast<std::int64_t>(items_.size()));
    if (from >= to) return;

    std::string class_list;
    for (const auto& c : spec_.classes) {
        if (!class_list.empty()) class_list += ", ";
        class_list += c.name;
    }

    auto analyze_one = [&](std::int64_t ord) {
        AnalyzeOut r;
        const CollectedItem& item = items_[static_cast<std::size_t>(ord)];
        try {
            const acquisition::ImageRecord rec = record_for(item, item.png);
            std::string prompt = prompts_.image_analysis;
            auto sub = [&](const std::string& k, const std::string& v) {
                const auto pos = prompt.find(k);
                if (pos != std::string::npos) prompt.replace(pos, k.size(), v);
            };
            sub("{classes}", class_list);
            sub("{image_id}", item.id);
            const std::string raw = gateway::analyze_multimodal(gw_.multimodal, rec, prompt);
            const analysis::ImageAnalysis a = analysis::parse_analysis(raw);
            if (auto v = analysis::check_resolution(a, rec.pixels))
                throw MalformedBackendReply("analysis " + v->field + ": " + v->rule);
            r.analysis_doc = analysis::serialize_analysis(a);
            r.alignment = analysis::score_alignment(a, spec_);
            r.risk = analysis::assess_risk(a);
            const analysis::Decision d = analysis::decide(a, spec_.quality, r.alignment);
            r.accept = d.accept;
            r.reason = d.reason;
            r.confidence = d.confidence;
            if (d.accept) r.class_name = labeling::assign_class_label(a, spec_);
        } catch (const BackendUnavailable& e) {
            r.failed = true;
            r.category = supervision::FailureCategory::BackendUnavailable;
            r.error = e.what();
        } catch (const BackendTimeout& e) {
            r.failed = true;
            r.category = supervision::FailureCategory::BackendUnavailable;
            r.error = e.what();
        } catch (const MalformedBackendReply& e) {
            r.failed = true;
            r.category = supervision::FailureCategory::MalformedBackendReply;
            r.error = e.what();
        } catch (const NotADocument& e) {
            r.failed = true;
            r.category = supervision::FailureCategory::MalformedBackendReply;
            r.error = e.what();
        } catch (const SchemaViolation& e) {
            r.failed = true;
            r.category = supervision::FailureCategory::MalformedBackendReply;
            r.error = e.what();
        } catch (const std::exception& e) {
            r.failed = true;
            r.category = supervision::FailureCategory::Unknown;
            r.error = e.what();
        }
        return r;
    };

    std::vector<AnalyzeOut> results(static_cast<std::size_t>(to - from));
    parallel_for(to - from, [&](std::int64_t i) { results[i] = analyze_one(from + i); }, threads);

    for (std::int64_t ord = from; ord < to; ++ord) {
        AnalyzeOut& r = results[static_cast<std::size_t>(ord - from)];
        const CollectedItem& item = items_[static_cast<std::size_t>(ord)];

        // failure path: diagnose, retry serially while advised, then skip
        int guard = 0;
        while (r.failed && guard++ < 5) {
            const auto res = handle_failure(r.category, json{{"item", item.id}, {"error", r.error}});
            if (res == supervision::Resolution::Retry) {
                r = analyze_one(ord);
                if (!r.failed) diag_.note_success();
                continue;
            }
            if (res == supervision::Resolution::Abort)
                throw PipelineError("aborted after repeated backend failures");
            break;  // Skip / Restart: give up on this item
        }

        json doc{{"ordinal", ord},    {"id", item.id},
                 {"accepted", false}, {"reason", ""},
                 {"alignment", 0.0},  {"risk", 0.0},
                 {"confidence", 0.0}, {"class", ""},
                 {"source_id", item.source_id}};
        if (r.failed) {
            doc["reason"] = "analysis unusable: " + r.error;
            ++stats_.rejected;
        } else {
            // quota gate at commit time keeps accepted <= target
            bool accept = r.accept;
            std::string reason = r.reason;
            if (accept) {
                const auto& q = quota_.classes.at(r.class_name);
                if (q.remaining() == 0) {
                    accept = false;
                    reason = "quota reached for class " + r.class_name;
                }
            }
            doc["accepted"] = accept;
            doc["reason"] = reason;
            doc["alignment"] = r.alignment;
            doc["risk"] = r.risk;
            doc["confidence"] = r.confidence;
            doc["class"] = accept ? r.class_name : "";
            doc["analysis"] = r.analysis_doc;
            if (accept) {
                quota_ = acquisition::update_quota(quota_, r.class_name,
                                                   acquisition::Outcome::Accepted);
            } else {
                ++stats_.rejected;
                if (!r.class_name.empty() && quota_.class_known(r.class_name))
                    quota_ = acquisition::update_quota(quota_, r.class_name,
                                                       acquisition::Outcome::Rejected);
                log_.record(Agent::Process, Level::Info, "rejected",
                            json{{"id", item.id}, {"reason", reason}});
            }
        }

        const fs::path out = paths_.analysis / ord_name(ord, item.id, ".json");
        supervision::commit_file(log_, Agent::Process, out, doc.dump(2),
                                 json{{"stage", "analyze"}, {"ordinal", ord}, {"id", item.id}});
        if (doc["accepted"] == true)
            accepted_.push_back({static_cast<std::int64_t>(accepted_.size()), ord});
        cursor_analyze_ = ord;
        maybe_checkpoint(Stage::Analyze);
    }
}

// --- optimize ------------------------------------------------------------------

void Engine::run_optimize(int batch, int threads) {
    const std::int64_t from = cursor_optimize_ + 1;
    const std::int64_t to =
        std::min<std::int64_t>(from + batch, static_cast<std::int64_t>(accepted_.size()));
    if (from >= to) return;

    struct OptimizeOut {
        bool failed = false;
        std::string error;
        std::vector<std::uint8_t> png;
        json plan = json::array();
    };

    auto optimize_one = [&](std::int64_t opt_ord) {
        OptimizeOut r;
        const AcceptedItem& acc = accepted_[static_cast<std::size_t>(opt_ord)];
        const CollectedItem& item = items_[static_cast<std::size_t>(acc.analyze_ordinal)];
        try {
            const json adoc =
                read_json_file(paths_.analysis / ord_name(acc.analyze_ordinal, item.id, ".json"));
            const analysis::ImageAnalysis a = analysis::parse_analysis(adoc.at("analysis"));
            analysis::PlanOptions popt;
            toolpkg::ToolPlan plan = analysis::plan_tools(a, spec_, popt);
            // the run seed reaches every stochastic step, keyed per item
            for (auto& step : plan.steps)
                if (step.op == "gaussian_noise" && !step.params.contains("seed"))
                    step.params["seed"] = rng::derive(cfg_.seed, "noise-step", item.id.empty()
                                                          ? static_cast<std::uint64_t>(opt_ord)
                                                          : rng::fnv1a(item.id));
            Image img = load_image(item.png);
            img = toolpkg::apply_plan(img, plan);
            r.png = encode_png(img);
            for (const auto& s : plan.steps)
                r.plan.push_back({{"op", s.op}, {"params", s.params}});
        } catch (const std::exception& e) {
            r.failed = true;
            r.error = e.what();
        }
        return r;
    };

    std::vector<OptimizeOut> results(static_cast<std::size_t>(to - from));
    parallel_for(to - from, [&](std::int64_t i) { results[i] = optimize_one(from + i); }, threads);

    for (std::int64_t ord = from; ord < to; ++ord) {
        OptimizeOut& r = results[static_cast<std::size_t>(ord - from)];
        const AcceptedItem& acc = accepted_[static_cast<std::size_t>(ord)];
        const CollectedItem& item = items_[static_cast<std::size_t>(acc.analyze_ordinal)];
        if (r.failed) {
            const auto res = handle_failure(supervision::FailureCategory::ToolError,
                                            json{{"item", item.id}, {"error", r.error}});
            if (res == supervision::Resolution::Restart || res == supervision::Resolution::Retry) {
                r = optimize_one(ord);
            }
            if (r.failed) throw PipelineError("optimize failed for " + item.id + ": " + r.error);
        }
        const fs::path out = paths_.optimized / ord_name(ord, item.id, ".png");
        supervision::commit_file(
            log_, Agent::Process, out,
            std::string_view(reinterpret_cast<const char*>(r.png.data()), r.png.size()),
            json{{"stage", "optimize"}, {"ordinal", ord}, {"id", item.id}, {"plan", r.plan}});
        cursor_optimize_ = ord;
        maybe_checkpoint(Stage::Optimize);
    }
}

// --- label ---------------------------------------------------------------------

void Engine::run_label(int batch, int threads) {
    const std::int64_t from = cursor_label_ + 1;
    const std::int64_t to =
        std::min<std::int64_t>(from + batch, cursor_optimize_ + 1);
    if (from >= to) return;

    struct LabelOut {
        bool failed = false;
        supervision::FailureCategory category = supervision::FailureCategory::Unknown;
        std::string error;
        bool keep = false;
        std::string reject_reason;
        std::string class_name;
        // relative path (under workspace) -> bytes
        std::vector<std::pair<std::string, std::string>> artifacts;
        json ann_doc;
    };

    const auto class_idx = labeling::class_index_map(spec_);

    auto label_one = [&](std::int64_t ord) {
        LabelOut r;
        const AcceptedItem& acc = accepted_[static_cast<std::size_t>(ord)];
        const CollectedItem& item = items_[static_cast<std::size_t>(acc.analyze_ordinal)];
        try {
            const fs::path opt_png = paths_.optimized / ord_name(ord, item.id, ".png");
            const auto png_bytes = read_file_bytes(opt_png);
            const std::string png_str(png_bytes.begin(), png_bytes.end());
            acquisition::ImageRecord rec;
            rec.id = item.id;
            rec.pixels = decode_image(png_bytes);
            rec.source_id = item.source_id;
            rec.origin_uri = item.origin_uri;

            const json adoc =
                read_json_file(paths_.analysis / ord_name(acc.analyze_ordinal, item.id, ".json"));
            const std::string cls = adoc.value("class", "");
            r.class_name = cls;

            switch (spec_.task_type) {
                case intake::TaskType::Classification: {
                    r.keep = true;
                    r.artifacts.emplace_back("out/" + cls + "/" + item.id + ".png", png_str);
                    labeling::AnnotationSet ann;
                    ann.image_id = item.id;
                    ann.class_label = cls;
                    r.ann_doc = labeling::annotation_to_json(ann);
                    break;
                }
                case intake::TaskType::Detection: {
                    labeling::AnnotateOptions opt;
                    opt.dedupe_iou = cfg_.dedupe_iou;
                    labeling::AnnotationSet ann =
                        labeling::annotate_detection(rec, spec_, gw_, opt);
                    ann.class_label = cls;
                    if (ann.detections.empty() && !cfg_.keep_negatives) {
                        r.keep = false;
                        r.reject_reason = ann.flag_reason;
                        break;
                    }
                    r.keep = true;
                    r.artifacts.emplace_back("out/images/" + item.id + ".png", png_str);
                    if (spec_.annotation_formats.count(intake::AnnotationFormat::YOLO))
                        r.artifacts.emplace_back(
                            "out/labels_yolo/" + item.id + ".txt",
                            labeling::emit_yolo(ann, rec.pixels.width, rec.pixels.height,
                                                class_idx));
                    if (spec_.annotation_formats.count(intake::AnnotationFormat::VOC))
                        r.artifacts.emplace_back(
                            "out/annotations_voc/" + item.id + ".xml",
                            labeling::emit_voc(labeling::voc_doc_from(
                                ann, item.id + ".png", rec.pixels.width, rec.pixels.height)));
                    r.ann_doc = labeling::annotation_to_json(ann);
                    break;
                }
                case intake::TaskType::SemanticSeg:
                case intake::TaskType::InstanceSeg:
                case intake::TaskType::PanopticSeg: {
                    const labeling::SegVariant variant =
                        spec_.task_type == intake::TaskType::SemanticSeg
                            ? labeling::SegVariant::Semantic
                            : spec_.task_type == intake::TaskType::InstanceSeg
                                  ? labeling::SegVariant::Instance
                                  : labeling::SegVariant::Panoptic;
                    labeling::AnnotationSet ann =
                        labeling::annotate_segmentation(rec, spec_, gw_, variant);
                    ann.class_label = cls;
                    const bool empty = (!ann.semantic_map || ann.semantic_map->area() == 0) &&
                                       (!ann.masks || ann.masks->masks.empty()) && !ann.panoptic;
                    if (empty && !cfg_.keep_negatives) {
                        r.keep = false;
                        r.reject_reason = "no mask produced";
                        break;
                    }
                    r.keep = true;
                    r.artifacts.emplace_back("out/images/" + item.id + ".png", png_str);
                    const auto palette = labeling::default_palette(spec_.classes.size());
                    for (auto& [name, bytes] : labeling::emit_masks(ann, palette)) {
                        // panoptic runs emit per-instance masks alongside the id map
                        const char* dir = name.ends_with("_panoptic.png") ? "out/masks_panoptic/"
                                          : ann.semantic_map && name == ann.image_id + ".png"
                                              ? "out/masks_semantic/"
                                              : "out/masks_instance/";
                        r.artifacts.emplace_back(dir + name,
                                                 std::string(bytes.begin(), bytes.end()));
                    }
                    if (ann.flagged)
                        r.reject_reason = ann.flag_reason;  // kept, but flagged in the log
                    r.ann_doc = labeling::annotation_to_json(ann);
                    break;
                }
            }
        } catch (const BackendUnavailable& e) {
            r.failed = true;
            r.category = supervision::FailureCategory::BackendUnavailable;
            r.error = e.what();
        } catch (const std::exception& e) {
            r.failed = true;
            r.category = supervision::FailureCategory::Unknown;
            r.error = e.what();
        }
        return r;
    };

    std::vector<LabelOut> results(static_cast<std::size_t>(to - from));
    parallel_for(to - from, [&](std::int64_t i) { results[i] = label_one(from + i); }, threads);

    for (std::int64_t ord = from; ord < to; ++ord) {
        LabelOut& r = results[static_cast<std::size_t>(ord - from)];
        const AcceptedItem& acc = accepted_[static_cast<std::size_t>(ord)];
        const CollectedItem& item = items_[static_cast<std::size_t>(acc.analyze_ordinal)];

        int guard = 0;
        while (r.failed && guard++ < 5) {
            const auto res = handle_failure(r.category, json{{"item", item.id}, {"error", r.error}});
            if (res == supervision::Resolution::Retry) {
                r = label_one(ord);
                if (!r.failed) diag_.note_success();
                continue;
            }
            if (res == supervision::Resolution::Abort)
                throw PipelineError("aborted during labeling");
            break;
        }

        json meta{{"ordinal", ord},
                  {"id", item.id},
                  {"accepted", false},
                  {"class", r.class_name},
                  {"original", fs::relative(item.png, paths_.ws).string()},
                  {"files", json::array()}};
        if (r.failed) {
            ++stats_.rejected;
            meta["reason"] = "labeling failed: " + r.error;
        } else if (!r.keep) {
            ++stats_.rejected;
            meta["reason"] = r.reject_reason;
            log_.record(Agent::Label, Level::Info, "unlabeled",
                        json{{"id", item.id}, {"reason", r.reject_reason}});
        } else {
            for (const auto& [rel, bytes] : r.artifacts) {
                supervision::commit_file(log_, Agent::Label, paths_.ws / rel, bytes,
                                         json{{"stage", "label"}, {"ordinal", ord}, {"id", item.id}});
                meta["files"].push_back(rel);
            }
            meta["accepted"] = true;
            meta["annotation"] = r.ann_doc;
            if (!r.reject_reason.empty()) {
                meta["flag"] = r.reject_reason;
                log_.record(Agent::Label, Level::Warn, "flagged",
                            json{{"id", item.id}, {"reason", r.reject_reason}});
            }
            ++stats_.accepted;
        }
        const fs::path mp = paths_.labelmeta / ord_name(ord, item.id, ".json");
        supervision::commit_file(log_, Agent::Label, mp, meta.dump(2),
                                 json{{"stage", "labelmeta"}, {"ordinal", ord}, {"id", item.id}});
        cursor_label_ = ord;
        maybe_checkpoint(Stage::Label);
    }
}

// --- finalize -------------------------------------------------------------------

void Engine::finalize() {
    if (finalized_) return;

    // gather everything from the committed label metas
    report::ReportInputs in;
    in.task = spec_.task_type;
    in.expand_mode = spec_.task_kind == intake::TaskKind::Expand;
    for (const auto& c : spec_.classes) in.class_images[c.name];

    std::vector<std::pair<labeling::CocoImageMeta, labeling::AnnotationSet>> coco_entries;
    std::vector<metrics::AlrEntry> alr_dataset;

    for (const auto& [ord, p] : scan_ordinals(paths_.labelmeta, ".json")) {
        if (ord > cursor_label_) continue;
        const json meta = read_json_file(p);
        if (!meta.value("accepted", false)) continue;
        const AcceptedItem& acc = accepted_[static_cast<std::size_t>(ord)];
        const CollectedItem& item = items_[static_cast<std::size_t>(acc.analyze_ordinal)];
        const std::string cls = meta.value("class", "");

        fs::path final_image;
        fs::path semantic_mask;
        for (const auto& f : meta.value("files", json::array())) {
            const std::string rel = f;
            if (rel.find("masks_semantic") != std::string::npos)
                semantic_mask = paths_.ws / rel;
            else if (rel.ends_with(".png") && rel.find("masks_") == std::string::npos)
                final_image = paths_.ws / rel;
        }
        if (final_image.empty()) continue;

        if (!cls.empty()) in.class_images[cls].push_back(final_image);
        in.original_of[final_image.string()] = paths_.ws / meta.value("original", std::string());
        in.source_ids.push_back(item.source_id);
        alr_dataset.push_back({item.id, cls});

        const json adoc =
            read_json_file(paths_.analysis / ord_name(acc.analyze_ordinal, item.id, ".json"));
        if (adoc.contains("analysis") && adoc["analysis"].is_object()) {
            const auto& risks = adoc["analysis"].value("quality_risks", json::object());
            in.occlusion_levels.push_back(risks.value("occlusion_level", 0.0));
        }

        labeling::AnnotationSet ann;
        if (meta.contains("annotation") && meta["annotation"].is_object())
            ann = labeling::annotation_from_json(meta["annotation"]);

        const Image final_img = load_image(final_image);
        if (spec_.task_type == intake::TaskType::Detection) {
            std::map<std::string, std::uint64_t> per_class;
            for (const auto& d : ann.detections) {
                ++per_class[d.class_name];
                in.instance_areas.push_back(static_cast<std::uint64_t>(
                    std::llround((d.box.x2 - d.box.x1) * final_img.width *
                                 (d.box.y2 - d.box.y1) * final_img.height)));
            }
            for (const auto& [c, n] : per_class) in.class_counts[c] += n;
        }
        if (!semantic_mask.empty()) {
            in.image_mask_pairs.emplace_back(final_image, semantic_mask);
            const Mask sem = load_png_indices(semantic_mask);
            for (std::uint32_t v : sem.labels) {
                if (v == 0) continue;
                if (v <= spec_.classes.size())
                    ++in.pixel_class_counts[spec_.classes[v - 1].name];
            }
        }
        if (ann.masks) {
            std::map<std::string, std::uint64_t> per_class;
            for (const auto& m : ann.masks->masks) {
                in.instance_areas.push_back(m.mask.area());
                ++per_class[m.class_name];
            }
            for (const auto& [c, n] : per_class) in.class_counts[c] += n;
        }

        if (spec_.task_type != intake::TaskType::Classification &&
            spec_.annotation_formats.count(intake::AnnotationFormat::COCO)) {
            // semantic map comes back from the emitted PNG (lossless)
            if (!semantic_mask.empty())
                ann.semantic_map = load_png_indices(semantic_mask);
            labeling::CocoImageMeta cm;
            cm.file_name = "images/" + item.id + ".png";
            cm.width = final_img.width;
            cm.height = final_img.height;
            coco_entries.emplace_back(cm, std::move(ann));
        }
    }

    // expand reference distribution
    if (in.expand_mode && !spec_.existing_root.empty()) {
        try {
            const auto [_, meta] = intake::resolve_expand_target(spec_, spec_.existing_root);
            in.original_class_counts = meta.per_class_counts;
        } catch (const PipelineError&) {
            // reference unavailable; DDC degrades to a note
        }
    }

    if (!coco_entries.empty()) {
        const json coco = labeling::emit_coco(coco_entries, spec_);
        supervision::commit_file(log_, Agent::Label, paths_.out / "annotations_coco.json",
                                 coco.dump(2), json{{"stage", "finalize"}, {"artifact", "coco"}});
    }

    // ALR sample manifest (seeded)
    {
        std::sort(alr_dataset.begin(), alr_dataset.end(),
                  [](const metrics::AlrEntry& a, const metrics::AlrEntry& b) {
                      return a.image_id < b.image_id;
                  });
        const std::size_t n =
            std::min<std::size_t>(cfg_.alr_sample_n, alr_dataset.size());
        const auto sample =
            metrics::alr_manifest(alr_dataset, n, rng::derive(cfg_.seed, "alr"));
        std::string tsv;
        for (const auto& e : sample) tsv += e.image_id + "\t" + e.label + "\n";
        supervision::commit_file(log_, Agent::Supervisor, paths_.out / "alr_manifest.tsv", tsv,
                                 json{{"stage", "finalize"}, {"artifact", "alr_manifest"}});
        if (!cfg_.alr_verdicts_file.empty() && fs::is_regular_file(cfg_.alr_verdicts_file)) {
            std::map<std::string, bool> verdicts;
            std::ifstream vf(cfg_.alr_verdicts_file);
            std::string line;
            while (std::getline(vf, line)) {
                const auto tab = line.find('\t');
                if (tab == std::string::npos) continue;
                verdicts[line.substr(0, tab)] = line.substr(tab + 1) == "correct";
            }
            in.alr_fraction = metrics::alr_ingest(sample, verdicts);
        }
    }

    if (!cfg_.bqi_ious_file.empty() && fs::is_regular_file(cfg_.bqi_ious_file)) {
        const json ious = read_json_file(cfg_.bqi_ious_file);
        for (const auto& v : ious) in.inspected_ious.push_back(v);
    }
    if (!cfg_.acs_masks_dir.empty() && fs::is_directory(cfg_.acs_masks_dir)) {
        for (const auto& e : fs::directory_iterator(paths_.out / "masks_semantic")) {
            const fs::path other = cfg_.acs_masks_dir / e.path().filename();
            if (!fs::is_regular_file(other)) continue;
            try {
                in.annotator_mask_pairs.emplace_back(load_png_indices(e.path()),
                                                     load_png_indices(other));
            } catch (const PipelineError&) {
            }
        }
    }

    const report::MetricReport rep = report::build_report(in);
    supervision::commit_file(log_, Agent::Supervisor, paths_.out / "report.json",
                             rep.to_json().dump(2), json{{"stage", "finalize"}, {"artifact", "report"}});
    supervision::commit_file(log_, Agent::Supervisor, paths_.out / "report.txt", rep.to_table(),
                             json{{"stage", "finalize"}, {"artifact", "report_table"}});

    // manifest over the whole out/ tree, itself committed last
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(paths_.out))
        if (e.is_regular_file() && e.path().filename() != "manifest.tsv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::string manifest;
    for (const auto& f : files)
        manifest += fs::relative(f, paths_.out).string() + "\t" + sha256_file_hex(f) + "\n";
    supervision::commit_file(log_, Agent::Supervisor, paths_.out / "manifest.tsv", manifest,
                             json{{"stage", "finalize"}, {"artifact", "manifest"}});

    const std::string verb =
        spec_.task_kind == intake::TaskKind::Expand ? "successfully expanded" : "successfully built";
    summary_ = "DatasetAgent: " + verb + " " + spec_.name + " with " +
               std::to_string(stats_.accepted) + " high-quality images.";
    finalized_ = true;
    write_checkpoint(Stage::Finalize);
    log_.record(Agent::Supervisor, Level::Info, "finalized",
                json{{"summary", summary_}, {"stats", stats_.to_json()}});
}

int Engine::run(bool resuming) {
    prompts_ = intake::PromptLibrary::load(cfg_.prompts_dir);
    if (resuming)
        resume_state();
    else
        fresh_start();

    if (finalized_) {
        console_ << "stats: collected=" << stats_.collected << " accepted=" << stats_.accepted
                 << " rejected=" << stats_.rejected << " skipped=" << stats_.skipped << "\n";
        console_ << summary_ << "\n";
        return kExitOk;  // resume of a completed run is a no-op
    }

    open_source();

    try {
        for (;;) {
            if (interrupted()) {
                log_.record(Agent::Supervisor, Level::Warn, "interrupted", json::object());
                write_checkpoint(Stage::Collect);
                console_ << "interrupted; checkpoint written, resume with --task resume\n";
                return kExitAborted;
            }
            const std::size_t analyze_depth =
                items_.size() - static_cast<std::size_t>(cursor_analyze_ + 1);
            const std::size_t optimize_depth =
                accepted_.size() - static_cast<std::size_t>(cursor_optimize_ + 1);
            const std::size_t label_depth =
                static_cast<std::size_t>(cursor_optimize_ - cursor_label_);
            const bool collecting = collect_active();
            // backlog estimate for the collector: remaining quota headroom
            const std::size_t collect_depth =
                collecting ? std::max<std::uint64_t>(collect_quota_.total_remaining(), 1) : 0;

            if (!collecting && analyze_depth == 0 && optimize_depth == 0 && label_depth == 0)
                break;

            const std::size_t depths[4] = {collect_depth, analyze_depth, optimize_depth,
                                           label_depth};
            const auto workers = supervision::schedule(depths, cfg_.workers);

            if (collect_depth > 0 && workers[0] > 0) run_collect(cfg_.batch_size, workers[0]);
            if (analyze_depth > 0 && workers[1] > 0) run_analyze(cfg_.batch_size, workers[1]);
            if (optimize_depth > 0 && workers[2] > 0) run_optimize(cfg_.batch_size, workers[2]);
            if (label_depth > 0 && workers[3] > 0) run_label(cfg_.batch_size, workers[3]);
        }

        finalize();
    } catch (const PipelineError& e) {
        log_.record(Agent::Supervisor, Level::Error, "aborted", json{{"error", e.what()}});
        write_checkpoint(Stage::Finalize);
        console_ << "aborted: " << e.what() << "\n";
        return kExitAborted;
    }

    console_ << "stats: collected=" << stats_.collected << " accepted=" << stats_.accepted
             << " rejected=" << stats_.rejected << " skipped=" << stats_.skipped << "\n";
    console_ << summary_ << "\n";
    return kExitOk;
}

}  // namespace

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

int run_pipeline(const RunConfig& cfg, intake::DatasetSpec spec, gateway::Gateway& gw,
                 std::ostream& out, bool resuming) {
    Engine engine(cfg, std::move(spec), gw, out);
    return engine.run(resuming);
}

namespace {
volatile std::sig_atomic_t g_interrupted = 0;
}

void install_interrupt_handler() {
    std::signal(SIGINT, [](int) { g_interrupted = 1; });
}

bool interrupted() { return g_interrupted != 0; }

std::string manifest_hash(const fs::path& workspace) {
    const fs::path m = workspace / "out" / "manifest.tsv";
    if (!fs::is_regular_file(m)) return {};
    return sha256_file_hex(m);
}

namespace {

// parse -> clarify loop -> config overlay -> validated spec (or exit code)
std::variant<intake::DatasetSpec, int> intake_demand(const RunConfig& cfg,
                                                     const std::string& demand,
                                                     gateway::Gateway& gw,
                                                     std::istream* interactive,
                                                     std::ostream& out) {
    const intake::PromptLibrary prompts = intake::PromptLibrary::load(cfg.prompts_dir);
    std::vector<std::string> context_docs;
    for (const auto& p : cfg.context_doc_paths) {
        std::ifstream in(p);
        if (in)
            context_docs.emplace_back(std::istreambuf_iterator<char>(in),
                                      std::istreambuf_iterator<char>());
    }

    std::string text = demand;
    for (int round = 0; round < 4; ++round) {
        std::variant<intake::DatasetSpec, intake::ClarificationRequest> parsed;
        try {
            parsed = intake::parse_demand(text, gw.text, prompts, context_docs);
        } catch (const IrrelevantDemand& e) {
            out << "demand rejected: " << e.what() << "\n";
            return kExitAborted;
        } catch (const MalformedBackendReply& e) {
            out << "backend extraction failed: " << e.what() << "\n";
            return kExitAborted;
        } catch (const BackendUnavailable& e) {
            out << "backend unavailable: " << e.what() << "\n";
            return kExitAborted;
        }

        if (std::holds_alternative<intake::DatasetSpec>(parsed))
            return std::get<intake::DatasetSpec>(parsed);

        const auto& req = std::get<intake::ClarificationRequest>(parsed);
        if (!interactive || round == 3) {
            out << "clarification needed: " << req.message << "\n";
            return kExitClarify;
        }
        for (const auto& field : req.missing) {
            out << "Please provide " << field << ": " << std::flush;
            std::string answer;
            if (!std::getline(*interactive, answer)) {
                out << "clarification needed: " << req.message << "\n";
                return kExitClarify;
            }
            text += "\n" + field + ": " + answer;
        }
    }
    return kExitClarify;
}

void overlay_config(intake::DatasetSpec& spec, const RunConfig& cfg) {
    if (spec.source.locator.empty()) spec.source = cfg.source;
    spec.quality.min_alignment_score = cfg.min_alignment;
    spec.quality.max_risk_score = cfg.max_risk;
    spec.quality.min_confidence = cfg.min_confidence;
    spec.quality.min_width = cfg.min_width;
    spec.quality.min_height = cfg.min_height;
    for (auto& c : spec.classes)
        if (c.target_count == 0) c.target_count = spec.per_class_target;
}

}  // namespace

int cmd_build(const RunConfig& cfg, const std::string& demand, gateway::Gateway& gw,
              std::istream* interactive, std::ostream& out) {
    auto parsed = intake_demand(cfg, demand, gw, interactive, out);
    if (std::holds_alternative<int>(parsed)) return std::get<int>(parsed);
    intake::DatasetSpec spec = std::get<intake::DatasetSpec>(parsed);

    if (spec.task_kind == intake::TaskKind::Expand) {
        out << "demand asks to expand; use the expand task with --root\n";
        return kExitAborted;
    }
    overlay_config(spec, cfg);

    const auto violations = intake::validate_spec(spec);
    if (!violations.empty()) {
        for (const auto& v : violations) out << "violation: " << v.field << ": " << v.rule << "\n";
        return kExitAborted;
    }
    return run_pipeline(cfg, std::move(spec), gw, out);
}

int cmd_expand(const RunConfig& cfg, const std::string& demand, const fs::path& root,
               gateway::Gateway& gw, std::istream* interactive, std::ostream& out) {
    auto parsed = intake_demand(cfg, demand, gw, interactive, out);
    if (std::holds_alternative<int>(parsed)) return std::get<int>(parsed);
    intake::DatasetSpec spec = std::get<intake::DatasetSpec>(parsed);
    spec.task_kind = intake::TaskKind::Expand;

    intake::ExistingDatasetMeta meta;
    try {
        std::tie(spec, meta) = intake::resolve_expand_target(spec, root);
    } catch (const PipelineError& e) {
        out << "cannot resolve expand target: " << e.what() << "\n";
        return kExitAborted;
    }
    for (const auto& v : meta.conflicts)
        out << "violation: " << v.field << ": " << v.rule << "\n";
    if (!meta.conflicts.empty()) return kExitAborted;

    overlay_config(spec, cfg);
    const auto violations = intake::validate_spec(spec);
    if (!violations.empty()) {
        for (const auto& v : violations) out << "violation: " << v.field << ": " << v.rule << "\n";
        return kExitAborted;
    }

    const int code = run_pipeline(cfg, spec, gw, out);
    if (code == kExitOk) {
        std::uint64_t original = 0;
        for (const auto& [_, n] : meta.per_class_counts) original += n;
        std::uint64_t added = 0;
        if (const auto cp = supervision::CheckpointStore(cfg.workspace).load())
            added = cp->extra.value("stats", json::object()).value("accepted", 0ULL);
        out << "expansion: original=" << original << " added=" << added
            << " new_total=" << (original + added) << "\n";
    }
    return code;
}

int cmd_resume(const RunConfig& cfg, const std::string& run_id, gateway::Gateway& gw,
               std::ostream& out) {
    RunConfig rc = cfg;
    if (!run_id.empty()) rc.run_id = run_id;
    const fs::path spec_file = rc.workspace / "spec.json";
    if (!fs::is_regular_file(spec_file)) {
        out << "no checkpoint: workspace has no run to resume\n";
        return kExitAborted;
    }
    intake::DatasetSpec spec;
    try {
        spec = intake::spec_from_json(read_json_file(spec_file));
    } catch (const PipelineError& e) {
        out << "no checkpoint: " << e.what() << "\n";
        return kExitAborted;
    }
    try {
        return run_pipeline(rc, std::move(spec), gw, out, /*resuming=*/true);
    } catch (const NoCheckpoint& e) {
        out << "no checkpoint: " << e.what() << "\n";
        return kExitAborted;
    } catch (const WorkspaceCorrupt& e) {
        out << "workspace corrupt: " << e.what() << "\n";
        return kExitAborted;
    }
}

// ---------------------------------------------------------------------------
// metrics command
// ---------------------------------------------------------------------------

namespace {

report::ReportInputs inputs_from_workspace(const RunConfig& cfg, const fs::path& ws) {
    const Paths paths(ws);
    const intake::DatasetSpec spec = intake::spec_from_json(read_json_file(paths.spec_file));
    report::ReportInputs in;
    in.task = spec.task_type;
    in.expand_mode = spec.task_kind == intake::TaskKind::Expand;
    for (const auto& c : spec.classes) in.class_images[c.name];

    for (const auto& [ord, p] : scan_ordinals(paths.labelmeta, ".json")) {
        const json meta = read_json_file(p);
        if (!meta.value("accepted", false)) continue;
        const std::string cls = meta.value("class", "");
        fs::path final_image, semantic_mask;
        for (const auto& f : meta.value("files", json::array())) {
            const std::string rel = f;
            if (rel.find("masks_semantic") != std::string::npos)
                semantic_mask = ws / rel;
            else if (rel.ends_with(".png") && rel.find("masks_") == std::string::npos)
                final_image = ws / rel;
        }
        if (final_image.empty()) continue;
        if (!cls.empty()) in.class_images[cls].push_back(final_image);
        in.original_of[final_image.string()] = ws / meta.value("original", std::string());

        labeling::AnnotationSet ann;
        if (meta.contains("annotation") && meta["annotation"].is_object())
            ann = labeling::annotation_from_json(meta["annotation"]);
        const Image final_img = load_image(final_image);
        for (const auto& d : ann.detections) {
            ++in.class_counts[d.class_name];
            in.instance_areas.push_back(static_cast<std::uint64_t>(
                std::llround((d.box.x2 - d.box.x1) * final_img.width * (d.box.y2 - d.box.y1) *
                             final_img.height)));
        }
        if (ann.masks)
            for (const auto& m : ann.masks->masks) {
                ++in.class_counts[m.class_name];
                in.instance_areas.push_back(m.mask.area());
            }
        if (!semantic_mask.empty()) {
            in.image_mask_pairs.emplace_back(final_image, semantic_mask);
            const Mask sem = load_png_indices(semantic_mask);
            for (std::uint32_t v : sem.labels)
                if (v != 0 && v <= spec.classes.size())
                    ++in.pixel_class_counts[spec.classes[v - 1].name];
        }
    }

    // source ids from the collected metas of accepted items
    for (const auto& [ord, p] : scan_ordinals(paths.analysis, ".json")) {
        const json doc = read_json_file(p);
        if (doc.value("accepted", false)) in.source_ids.push_back(doc.value("source_id", "local"));
    }

    if (in.expand_mode && !spec.existing_root.empty() && fs::is_directory(spec.existing_root)) {
        try {
            const auto [_, meta] = intake::resolve_expand_target(spec, spec.existing_root);
            in.original_class_counts = meta.per_class_counts;
        } catch (const PipelineError&) {
        }
    }

    if (!cfg.bqi_ious_file.empty() && fs::is_regular_file(cfg.bqi_ious_file)) {
        const json ious = read_json_file(cfg.bqi_ious_file);
        for (const auto& v : ious) in.inspected_ious.push_back(v);
    }
    if (!cfg.alr_verdicts_file.empty() && fs::is_regular_file(cfg.alr_verdicts_file) &&
        fs::is_regular_file(paths.out / "alr_manifest.tsv")) {
        std::vector<metrics::AlrEntry> manifest;
        std::ifstream mf(paths.out / "alr_manifest.tsv");
        std::string line;
        while (std::getline(mf, line)) {
            const auto tab = line.find('\t');
            if (tab != std::string::npos)
                manifest.push_back({line.substr(0, tab), line.substr(tab + 1)});
        }
        std::map<std::string, bool> verdicts;
        std::ifstream vf(cfg.alr_verdicts_file);
        while (std::getline(vf, line)) {
            const auto tab = line.find('\t');
            if (tab != std::string::npos)
                verdicts[line.substr(0, tab)] = line.substr(tab + 1) == "correct";
        }
        in.alr_fraction = metrics::alr_ingest(manifest, verdicts);
    }
    if (!cfg.acs_masks_dir.empty() && fs::is_directory(cfg.acs_masks_dir) &&
        fs::is_directory(paths.out / "masks_semantic")) {
        for (const auto& e : fs::directory_iterator(paths.out / "masks_semantic")) {
            const fs::path other = cfg.acs_masks_dir / e.path().filename();
            if (!fs::is_regular_file(other)) continue;
            try {
                in.annotator_mask_pairs.emplace_back(load_png_indices(e.path()),
                                                     load_png_indices(other));
            } catch (const PipelineError&) {
            }
        }
    }

    // occlusion levels from stored analyses of accepted items
    for (const auto& [ord, p] : scan_ordinals(paths.analysis, ".json")) {
        const json doc = read_json_file(p);
        if (!doc.value("accepted", false)) continue;
        if (doc.contains("analysis") && doc["analysis"].is_object()) {
            const auto& risks = doc["analysis"].value("quality_risks", json::object());
            in.occlusion_levels.push_back(risks.value("occlusion_level", 0.0));
        }
    }
    return in;
}

report::ReportInputs inputs_from_bare_dataset(const fs::path& root) {
    intake::DatasetSpec probe;
    probe.task_kind = intake::TaskKind::Expand;
    probe.per_class_target = 1;
    const auto [spec, meta] = intake::resolve_expand_target(probe, root);

    report::ReportInputs in;
    in.task = spec.task_type;
    in.expand_mode = false;

    switch (meta.layout) {
        case intake::AnnotationFormat::ClassDirs: {
            for (const auto& e : fs::directory_iterator(root)) {
                if (!e.is_directory()) continue;
                const std::string cls = e.path().filename().string();
                for (const auto& f : fs::recursive_directory_iterator(e.path()))
                    if (f.is_regular_file()) in.class_images[cls].push_back(f.path());
                std::sort(in.class_images[cls].begin(), in.class_images[cls].end());
            }
            break;
        }
        default: {
            // instance counts from the existing annotations
            for (const auto& [cls, n] : meta.per_class_counts) in.class_counts[cls] = n;
            const fs::path imgdir = fs::is_directory(root / "images")
                                        ? root / "images"
                                        : root / "JPEGImages";
            if (fs::is_directory(imgdir)) {
                std::vector<fs::path> imgs;
                for (const auto& f : fs::directory_iterator(imgdir))
                    if (f.is_regular_file()) imgs.push_back(f.path());
                std::sort(imgs.begin(), imgs.end());
                in.class_images["_all"] = imgs;
            }
            break;
        }
    }
    return in;
}

}  // namespace

int cmd_metrics(const RunConfig& cfg, const fs::path& root, std::ostream& out) {
    report::ReportInputs in;
    fs::path report_dir;
    try {
        if (fs::is_regular_file(root / "spec.json") && fs::is_directory(root / "out")) {
            in = inputs_from_workspace(cfg, root);
            report_dir = root / "out";
        } else {
            in = inputs_from_bare_dataset(root);
            report_dir = root;
        }
    } catch (const UnrecognizedLayout& e) {
        out << "unrecognized layout: " << e.what() << "\n";
        return kExitAborted;
    } catch (const PipelineError& e) {
        out << "cannot scan dataset: " << e.what() << "\n";
        return kExitAborted;
    }

    const report::MetricReport rep = report::build_report(in);
    write_text_file(report_dir / "report.json", rep.to_json().dump(2));
    write_text_file(report_dir / "report.txt", rep.to_table());
    out << rep.to_table();
    return kExitOk;
}

}  // namespace dsa::pipeline
