#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "dsa/config.hpp"
#include "dsa/gateway.hpp"
#include "dsa/intake.hpp"

// The end-to-end workflow: intake -> collect -> analyze -> optimize ->
// label -> finalize -> report, supervised with an append-only event log,
// atomic checkpoints and crash-consistent resume.
//
// Exit codes: 0 success, 2 clarification needed (batch mode), 3 aborted.
namespace dsa::pipeline {

inline constexpr int kExitOk = 0;
inline constexpr int kExitClarify = 2;
inline constexpr int kExitAborted = 3;

int cmd_build(const RunConfig& cfg, const std::string& demand, gateway::Gateway& gw,
              std::istream* interactive, std::ostream& out);

int cmd_expand(const RunConfig& cfg, const std::string& demand,
               const std::filesystem::path& root, gateway::Gateway& gw, std::istream* interactive,
               std::ostream& out);

int cmd_resume(const RunConfig& cfg, const std::string& run_id, gateway::Gateway& gw,
               std::ostream& out);

int cmd_metrics(const RunConfig& cfg, const std::filesystem::path& root, std::ostream& out);

// runs a validated spec end to end; exposed for tests and fault harnesses
int run_pipeline(const RunConfig& cfg, intake::DatasetSpec spec, gateway::Gateway& gw,
                 std::ostream& out, bool resuming = false);

// sha256 of out/manifest.tsv, the run's output identity
std::string manifest_hash(const std::filesystem::path& workspace);

// Ctrl-C: the engine checkpoints at the next batch boundary and exits with
// a resumable workspace
void install_interrupt_handler();
bool interrupted();

}  // namespace dsa::pipeline
