#pragma once

#include <stdexcept>
#include <string>

// Error taxonomy shared across the pipeline. Every condition a caller may
// want to catch individually gets its own type; the supervisor maps these
// onto failure categories for diagnosis.
namespace dsa {

struct PipelineError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// model_gateway
struct BackendUnavailable : PipelineError { using PipelineError::PipelineError; };
struct BackendTimeout : PipelineError { using PipelineError::PipelineError; };
struct MalformedBackendReply : PipelineError { using PipelineError::PipelineError; };

// spec_intake
struct IrrelevantDemand : PipelineError { using PipelineError::PipelineError; };
struct UnrecognizedLayout : PipelineError { using PipelineError::PipelineError; };
struct EmptyDataset : PipelineError { using PipelineError::PipelineError; };

// acquisition / image io
struct LocatorMissing : PipelineError { using PipelineError::PipelineError; };
struct DecodeFailure : PipelineError { using PipelineError::PipelineError; };
struct UnknownClass : PipelineError { using PipelineError::PipelineError; };

// vision_analysis / schema validation
struct NotADocument : PipelineError { using PipelineError::PipelineError; };
struct SchemaViolation : PipelineError {
    SchemaViolation(std::string f, std::string r)
        : PipelineError("schema violation: " + f + ": " + r),
          field(std::move(f)), rule(std::move(r)) {}
    std::string field;
    std::string rule;
};

// tool_package
struct DegenerateCrop : PipelineError { using PipelineError::PipelineError; };
struct ZeroVariance : PipelineError { using PipelineError::PipelineError; };
struct UnsupportedConversion : PipelineError { using PipelineError::PipelineError; };
struct ToolError : PipelineError { using PipelineError::PipelineError; };

// labeling
struct NoMatchingClass : PipelineError { using PipelineError::PipelineError; };
struct TooManyClasses : PipelineError { using PipelineError::PipelineError; };
struct DimensionMismatch : PipelineError { using PipelineError::PipelineError; };

// supervision
struct NoCheckpoint : PipelineError { using PipelineError::PipelineError; };
struct WorkspaceCorrupt : PipelineError { using PipelineError::PipelineError; };
struct LogUnwritable : PipelineError { using PipelineError::PipelineError; };

// quality_metrics
struct ImageTooSmall : PipelineError { using PipelineError::PipelineError; };
struct DegenerateVector : PipelineError { using PipelineError::PipelineError; };
struct UnsupportedSupport : PipelineError { using PipelineError::PipelineError; };
struct EmptyEdgeSet : PipelineError { using PipelineError::PipelineError; };
struct BothEmpty : PipelineError { using PipelineError::PipelineError; };
struct SampleTooLarge : PipelineError { using PipelineError::PipelineError; };
struct IngestMismatch : PipelineError { using PipelineError::PipelineError; };

}  // namespace dsa
