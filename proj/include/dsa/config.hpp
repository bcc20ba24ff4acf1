#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dsa/acquisition.hpp"

namespace dsa {

// One run's knobs. Loaded from a key = value config file, overridable by
// CLI flags; every stochastic feature derives from `seed`.
struct RunConfig {
    std::filesystem::path workspace = "workspace";
    std::string run_id;  // defaults to "run-<seed>"
    int workers = 1;
    std::uint64_t seed = 0;
    int batch_size = 16;

    double overcollect_factor = 1.2;
    int checkpoint_every_items = 64;
    int checkpoint_every_secs = 30;

    // quality thresholds handed to DatasetSpec
    double min_alignment = 0.5;
    double max_risk = 0.5;
    double min_confidence = 0.5;
    int min_width = 1;
    int min_height = 1;
    double dedupe_iou = 0.9;
    bool keep_negatives = false;

    bool mock_backends = false;
    bool batch_mode = true;  // no interactive clarification

    std::filesystem::path prompts_dir = "prompts";
    acquisition::SourceDescriptor source;
    std::vector<std::string> context_doc_paths;
    std::map<std::string, std::string> endpoints;  // text/mm/ground/seg

    // optional metric inputs (human-inspection data)
    std::filesystem::path alr_verdicts_file;
    std::filesystem::path bqi_ious_file;
    std::filesystem::path acs_masks_dir;
    std::uint64_t alr_sample_n = 100;

    std::string effective_run_id() const {
        return run_id.empty() ? "run-" + std::to_string(seed) : run_id;
    }
};

RunConfig load_config_file(const std::filesystem::path& path);
// applies a single `key = value` setting; throws PipelineError on unknown keys
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value);

}  // namespace dsa
