#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dsa/image.hpp"

// Candidate image sourcing behind pluggable adapters plus the per-class
// quota controller. Live crawling is out of scope; a source is a local
// directory, a list of URLs, or a corpus manifest.
namespace dsa::acquisition {

struct SourceDescriptor {
    enum class Kind { LocalDir, UrlList, CorpusManifest };
    Kind kind = Kind::LocalDir;
    std::string locator;
    std::string source_id = "local";
    int politeness_ms = 0;  // UrlList fetch delay
};

struct ImageRecord {
    std::string id;
    Image pixels;
    std::string source_id;
    std::string origin_uri;
    std::int64_t acquired_at_ms = 0;
    std::string class_hint;  // optional manifest column, drives class-keyed fetch
};

// Raw source entry before decode.
struct SourceEntry {
    std::string id;
    std::string locator;  // path or url
    std::string source_id;
    std::string class_hint;
};

class SourceHandle {
public:
    virtual ~SourceHandle() = default;
    // deterministic order (lexicographic path / manifest line order)
    virtual std::optional<SourceEntry> next() = 0;
    virtual std::size_t consumed() const = 0;
    // skips `n` leading entries; used to resume from a checkpoint cursor
    void skip(std::size_t n) {
        for (std::size_t i = 0; i < n; ++i)
            if (!next()) break;
    }
};

std::unique_ptr<SourceHandle> open_source(const SourceDescriptor& desc);

enum class Outcome { Accepted, Rejected };

struct ClassQuota {
    std::uint64_t target = 0;
    std::uint64_t accepted = 0;
    std::uint64_t rejected = 0;
    std::uint64_t in_flight = 0;
    std::uint64_t remaining() const { return target > accepted ? target - accepted : 0; }
};

struct QuotaState {
    std::map<std::string, ClassQuota> classes;

    bool class_known(const std::string& name) const { return classes.count(name) != 0; }
    bool all_satisfied() const {
        for (const auto& [_, q] : classes)
            if (q.remaining() > 0) return false;
        return true;
    }
    std::uint64_t total_remaining() const {
        std::uint64_t r = 0;
        for (const auto& [_, q] : classes) r += q.remaining();
        return r;
    }
};

QuotaState update_quota(QuotaState quota, const std::string& class_name, Outcome outcome);

struct SkipNote {
    std::string locator;
    std::string reason;
};

// Pulls up to batch_size decodable records. Corrupt/unreadable entries are
// skipped and reported through `skipped` (non-fatal, mirrors the workflow's
// recovery row). Entries whose class_hint has no remaining quota are not
// fetched at all.
std::vector<ImageRecord> next_batch(SourceHandle& handle, const QuotaState& quota, int batch_size,
                                    std::vector<SkipNote>* skipped = nullptr);

}  // namespace dsa::acquisition
