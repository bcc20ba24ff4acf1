#include "dsa/acquisition.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <thread>

#include "httplib.h"

#include "dsa/errors.hpp"
#include "dsa/image_io.hpp"

namespace dsa::acquisition {

namespace fs = std::filesystem;

namespace {

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

std::string sanitize_id(std::string s) {
    for (char& c : s)
        if (c == '/' || c == '\\' || c == '.' || c == ' ') c = '_';
    return s;
}

bool has_image_extension(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".jpg" || ext == ".jpeg" || ext == ".png" || ext == ".bmp";
}

class ListSource : public SourceHandle {
public:
    explicit ListSource(std::vector<SourceEntry> entries, int politeness_ms = 0)
        : entries_(std::move(entries)), politeness_ms_(politeness_ms) {}

    std::optional<SourceEntry> next() override {
        if (pos_ >= entries_.size()) return std::nullopt;
        return entries_[pos_++];
    }
    std::size_t consumed() const override { return pos_; }
    int politeness_ms() const { return politeness_ms_; }

private:
    std::vector<SourceEntry> entries_;
    std::size_t pos_ = 0;
    int politeness_ms_ = 0;
};

std::vector<SourceEntry> scan_local_dir(const SourceDescriptor& desc) {
    const fs::path root(desc.locator);
    if (!fs::is_directory(root)) throw LocatorMissing("not a directory: " + desc.locator);
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file() && has_image_extension(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<SourceEntry> out;
    out.reserve(files.size());
    for (const auto& p : files) {
        SourceEntry e;
        const fs::path rel = fs::relative(p, root);
        e.id = sanitize_id(rel.parent_path().empty()
                               ? rel.stem().string()
                               : (rel.parent_path() / rel.stem()).string());
        e.locator = p.string();
        e.source_id = desc.source_id;
        // immediate subdirectory doubles as a class hint when present
        if (!rel.parent_path().empty()) e.class_hint = rel.begin()->string();
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<SourceEntry> scan_url_list(const SourceDescriptor& desc) {
    std::ifstream in(desc.locator);
    if (!in) throw LocatorMissing("cannot open url list: " + desc.locator);
    std::vector<SourceEntry> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        SourceEntry e;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "url_%05zu", n++);
        e.id = buf;
        e.locator = line;
        e.source_id = desc.source_id;
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<SourceEntry> scan_manifest(const SourceDescriptor& desc) {
    std::ifstream in(desc.locator);
    if (!in) throw LocatorMissing("cannot open manifest: " + desc.locator);
    const fs::path base = fs::path(desc.locator).parent_path();
    std::vector<SourceEntry> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        SourceEntry e;
        std::vector<std::string> cols;
        std::size_t start = 0;
        while (true) {
            const auto tab = line.find('\t', start);
            cols.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (cols.size() < 3) continue;  // malformed line, skipped silently
        e.id = sanitize_id(cols[0]);    // ids become file names downstream
        e.locator = cols[1];
        e.source_id = cols[2];
        if (cols.size() >= 4) e.class_hint = cols[3];
        if (!e.locator.starts_with("http://") && !e.locator.starts_with("https://") &&
            fs::path(e.locator).is_relative())
            e.locator = (base / e.locator).string();
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<std::uint8_t> fetch_bytes(const std::string& locator, int politeness_ms) {
    if (locator.starts_with("http://") || locator.starts_with("https://")) {
        if (politeness_ms > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(politeness_ms));
        const auto scheme = locator.find("://");
        const auto slash = locator.find('/', scheme + 3);
        const std::string base = slash == std::string::npos ? locator : locator.substr(0, slash);
        const std::string path = slash == std::string::npos ? "/" : locator.substr(slash);
        httplib::Client cli(base);
        auto res = cli.Get(path);
        if (!res || res->status != 200) throw DecodeFailure("fetch failed: " + locator);
        return std::vector<std::uint8_t>(res->body.begin(), res->body.end());
    }
    return read_file_bytes(locator);
}

}  // namespace

std::unique_ptr<SourceHandle> open_source(const SourceDescriptor& desc) {
    switch (desc.kind) {
        case SourceDescriptor::Kind::LocalDir:
            return std::make_unique<ListSource>(scan_local_dir(desc));
        case SourceDescriptor::Kind::UrlList:
            return std::make_unique<ListSource>(scan_url_list(desc), desc.politeness_ms);
        case SourceDescriptor::Kind::CorpusManifest:
            return std::make_unique<ListSource>(scan_manifest(desc));
    }
    throw LocatorMissing("unknown source kind");
}

QuotaState update_quota(QuotaState quota, const std::string& class_name, Outcome outcome) {
    auto it = quota.classes.find(class_name);
    if (it == quota.classes.end()) throw UnknownClass("quota update for unknown class: " + class_name);
    if (outcome == Outcome::Accepted)
        ++it->second.accepted;
    else
        ++it->second.rejected;
    if (it->second.in_flight > 0) --it->second.in_flight;
    return quota;
}

std::vector<ImageRecord> next_batch(SourceHandle& handle, const QuotaState& quota, int batch_size,
                                    std::vector<SkipNote>* skipped) {
    if (batch_size < 1) throw PipelineError("batch_size must be >= 1");
    std::vector<ImageRecord> out;
    const auto* list = dynamic_cast<ListSource*>(&handle);
    const int politeness = list ? list->politeness_ms() : 0;
    while (static_cast<int>(out.size()) < batch_size) {
        auto entry = handle.next();
        if (!entry) break;
        // class-keyed sources stop fetching for satisfied classes
        if (!entry->class_hint.empty() && quota.class_known(entry->class_hint)) {
            const auto& q = quota.classes.at(entry->class_hint);
            if (q.remaining() == 0) continue;
        }
        try {
            ImageRecord rec;
            rec.pixels = decode_image(fetch_bytes(entry->locator, politeness));
            rec.id = entry->id;
            rec.source_id = entry->source_id;
            rec.origin_uri = entry->locator;
            rec.class_hint = entry->class_hint;
            rec.acquired_at_ms = now_ms();
            out.push_back(std::move(rec));
        } catch (const DecodeFailure& e) {
            if (skipped) skipped->push_back({entry->locator, e.what()});
        }
    }
    return out;
}

}  // namespace dsa::acquisition
