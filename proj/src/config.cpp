#include "dsa/config.hpp"

#include <algorithm>
#include <fstream>

#include "dsa/errors.hpp"

namespace dsa {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::string unquote(std::string s) {
    if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                          (s.front() == '\'' && s.back() == '\'')))
        return s.substr(1, s.size() - 2);
    return s;
}

// strips a trailing "# comment"; quoted values keep their # characters
std::string strip_inline_comment(std::string s) {
    s = trim(s);
    if (!s.empty() && (s.front() == '"' || s.front() == '\'')) {
        const auto closing = s.find(s.front(), 1);
        if (closing != std::string::npos) return s.substr(0, closing + 1);
        return s;
    }
    const auto hash = s.find('#');
    if (hash != std::string::npos) s = s.substr(0, hash);
    return trim(s);
}

bool parse_bool(const std::string& v) {
    return v == "true" || v == "1" || v == "yes" || v == "on";
}

}  // namespace

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& raw_value) {
    const std::string value = unquote(strip_inline_comment(raw_value));
    if (key == "workspace") cfg.workspace = value;
    else if (key == "run_id") cfg.run_id = value;
    else if (key == "workers") cfg.workers = std::stoi(value);
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "batch_size") cfg.batch_size = std::stoi(value);
    else if (key == "overcollect_factor") cfg.overcollect_factor = std::stod(value);
    else if (key == "checkpoint_every_items") cfg.checkpoint_every_items = std::stoi(value);
    else if (key == "checkpoint_every_secs") cfg.checkpoint_every_secs = std::stoi(value);
    else if (key == "min_alignment") cfg.min_alignment = std::stod(value);
    else if (key == "max_risk") cfg.max_risk = std::stod(value);
    else if (key == "min_confidence") cfg.min_confidence = std::stod(value);
    else if (key == "min_width") cfg.min_width = std::stoi(value);
    else if (key == "min_height") cfg.min_height = std::stoi(value);
    else if (key == "dedupe_iou") cfg.dedupe_iou = std::stod(value);
    else if (key == "keep_negatives") cfg.keep_negatives = parse_bool(value);
    else if (key == "mock_backends") cfg.mock_backends = parse_bool(value);
    else if (key == "batch_mode") cfg.batch_mode = parse_bool(value);
    else if (key == "prompts_dir") cfg.prompts_dir = value;
    else if (key == "source_kind") {
        if (value == "local_dir") cfg.source.kind = acquisition::SourceDescriptor::Kind::LocalDir;
        else if (value == "url_list") cfg.source.kind = acquisition::SourceDescriptor::Kind::UrlList;
        else if (value == "manifest")
            cfg.source.kind = acquisition::SourceDescriptor::Kind::CorpusManifest;
        else throw PipelineError("config: unknown source_kind: " + value);
    } else if (key == "source_locator") cfg.source.locator = value;
    else if (key == "source_id") cfg.source.source_id = value;
    else if (key == "politeness_ms") cfg.source.politeness_ms = std::stoi(value);
    else if (key == "context_doc") cfg.context_doc_paths.push_back(value);
    else if (key == "text_endpoint") cfg.endpoints["text"] = value;
    else if (key == "mm_endpoint") cfg.endpoints["mm"] = value;
    else if (key == "ground_endpoint") cfg.endpoints["ground"] = value;
    else if (key == "seg_endpoint") cfg.endpoints["seg"] = value;
    else if (key == "text_model") cfg.endpoints["text_model"] = value;
    else if (key == "mm_model") cfg.endpoints["mm_model"] = value;
    else if (key == "ground_model") cfg.endpoints["ground_model"] = value;
    else if (key == "seg_model") cfg.endpoints["seg_model"] = value;
    else if (key == "alr_verdicts_file") cfg.alr_verdicts_file = value;
    else if (key == "bqi_ious_file") cfg.bqi_ious_file = value;
    else if (key == "acs_masks_dir") cfg.acs_masks_dir = value;
    else if (key == "alr_sample_n") cfg.alr_sample_n = std::stoull(value);
    else throw PipelineError("config: unknown key: " + key);
}

RunConfig load_config_file(const std::filesystem::path& path) {
    RunConfig cfg;
    std::ifstream in(path);
    if (!in) throw PipelineError("cannot open config file: " + path.string());
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == '[') continue;  // [sections] are decorative
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw PipelineError("config: line " + std::to_string(lineno) + " is not key = value");
        apply_config_entry(cfg, trim(t.substr(0, eq)), t.substr(eq + 1));
    }
    return cfg;
}

}  // namespace dsa
