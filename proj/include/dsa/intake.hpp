#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "dsa/acquisition.hpp"
#include "dsa/gateway.hpp"
#include "dsa/violation.hpp"

// Demand analysis: turn a natural-language request into a validated
// DatasetSpec, or a precise list of what is missing. Expand-mode targets
// inherit schema and sizing from the existing dataset tree.
namespace dsa::intake {

enum class TaskKind { Build, Expand };
enum class TaskType { Classification, Detection, SemanticSeg, InstanceSeg, PanopticSeg };
enum class AnnotationFormat { ClassDirs, YOLO, VOC, COCO, MaskPNG };

std::string to_string(TaskKind k);
std::string to_string(TaskType t);
std::string to_string(AnnotationFormat f);
std::optional<TaskKind> task_kind_from_string(const std::string& s);
std::optional<TaskType> task_type_from_string(const std::string& s);
std::optional<AnnotationFormat> annotation_format_from_string(const std::string& s);

struct ClassDef {
    std::string name;
    std::uint64_t target_count = 0;
    std::vector<std::string> synonyms;
};

struct QualityConstraints {
    int min_width = 1;
    int min_height = 1;
    double max_risk_score = 0.5;
    double min_alignment_score = 0.5;
    double min_confidence = 0.5;
};

struct DatasetSpec {
    TaskKind task_kind = TaskKind::Build;
    TaskType task_type = TaskType::Classification;
    std::string name = "dataset";
    std::vector<ClassDef> classes;
    std::optional<std::pair<int, int>> target_resolution;
    std::set<AnnotationFormat> annotation_formats;
    std::uint64_t per_class_target = 1;
    acquisition::SourceDescriptor source;
    std::string existing_root;  // Expand only
    QualityConstraints quality;
    std::vector<std::string> context_docs;

    const ClassDef* match_class(const std::string& category) const;  // case-folded name/synonym
};

nlohmann::json spec_to_json(const DatasetSpec& spec);
DatasetSpec spec_from_json(const nlohmann::json& doc);

struct ClarificationRequest {
    std::vector<std::string> missing;
    std::string message;
};

// Editable prompt templates; defaults ship as files under prompts/ and are
// mirrored here so the binary also works without them.
struct PromptLibrary {
    std::string demand_extraction;
    std::string schema_repair;
    std::string image_analysis;
    std::string diagnosis;

    static PromptLibrary builtin();
    static PromptLibrary load(const std::filesystem::path& dir);
};

// Asks the backend for a structured extraction, validates it against the
// published schema (one repair retry), and maps it onto a DatasetSpec.
std::variant<DatasetSpec, ClarificationRequest> parse_demand(
    const std::string& raw, const gateway::TextModelHandle& backend,
    const PromptLibrary& prompts, const std::vector<std::string>& context_docs = {});

std::vector<Violation> validate_spec(const DatasetSpec& spec);

struct ExistingDatasetMeta {
    std::string root;
    AnnotationFormat layout = AnnotationFormat::ClassDirs;
    std::vector<std::string> class_names;
    std::map<std::string, std::uint64_t> per_class_counts;
    std::uint64_t image_count = 0;
    int min_width = 0, min_height = 0, max_width = 0, max_height = 0;
    std::optional<std::pair<int, int>> uniform_resolution;
    // user demand vs existing tree conflicts; surfaced, never guessed away
    std::vector<Violation> conflicts;
};

std::pair<DatasetSpec, ExistingDatasetMeta> resolve_expand_target(
    const DatasetSpec& spec, const std::filesystem::path& root);

}  // namespace dsa::intake
