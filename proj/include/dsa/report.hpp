#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dsa/image.hpp"
#include "dsa/intake.hpp"

// Assembles the per-task metric report: six core columns for classification,
// plus IDDE/BQI/OSR for detection or ESI/ACS/PCB for segmentation, in that
// column order. Human-inspection metrics (ALR, BQI, ACS) appear as pending
// notes until their input files are supplied.
namespace dsa::report {

struct MetricValue {
    std::string name;
    std::optional<double> value;
    std::optional<double> threshold;
    std::optional<bool> pass;
    std::string note;
};

struct MetricReport {
    intake::TaskType task = intake::TaskType::Classification;
    std::vector<MetricValue> columns;
    nlohmann::json meta = nlohmann::json::object();

    nlohmann::json to_json() const;
    std::string to_table() const;
    const MetricValue* find(const std::string& name) const;
};

struct ReportInputs {
    intake::TaskType task = intake::TaskType::Classification;
    bool expand_mode = false;

    std::map<std::string, std::vector<std::filesystem::path>> class_images;
    // CBI counts; derived from class_images when empty (detection uses
    // per-class instance counts instead of image counts)
    std::map<std::string, std::uint64_t> class_counts;
    // final image -> pre-optimization original (SSIM pairs)
    std::map<std::string, std::filesystem::path> original_of;
    std::vector<std::string> source_ids;
    std::map<std::string, std::uint64_t> original_class_counts;  // Expand reference

    std::vector<double> occlusion_levels;
    std::vector<std::uint64_t> instance_areas;
    std::vector<double> inspected_ious;
    std::optional<double> alr_fraction;
    std::vector<std::pair<Mask, Mask>> annotator_mask_pairs;
    std::map<std::string, std::uint64_t> pixel_class_counts;
    // (image, semantic mask) pairs for edge sharpness
    std::vector<std::pair<std::filesystem::path, std::filesystem::path>> image_mask_pairs;
};

MetricReport build_report(const ReportInputs& in);

}  // namespace dsa::report
