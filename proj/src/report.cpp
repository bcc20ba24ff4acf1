#include "dsa/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "dsa/errors.hpp"
#include "dsa/image_io.hpp"
#include "dsa/metrics.hpp"
#include "dsa/toolpkg.hpp"

namespace dsa::report {

using nlohmann::json;

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

MetricValue with_pass(std::string name, double value, double threshold, bool lower_is_better) {
    MetricValue m;
    m.name = std::move(name);
    m.value = value;
    m.threshold = threshold;
    m.pass = lower_is_better ? value < threshold : value > threshold;
    return m;
}

MetricValue info_only(std::string name, std::optional<double> value, std::string note = "") {
    MetricValue m;
    m.name = std::move(name);
    m.value = value;
    m.note = std::move(note);
    return m;
}

}  // namespace

const MetricValue* MetricReport::find(const std::string& name) const {
    for (const auto& c : columns)
        if (c.name == name) return &c;
    return nullptr;
}

json MetricReport::to_json() const {
    json cols = json::array();
    for (const auto& c : columns) {
        json e{{"name", c.name}};
        if (c.value) e["value"] = *c.value;
        if (c.threshold) e["threshold"] = *c.threshold;
        if (c.pass) e["pass"] = *c.pass;
        if (!c.note.empty()) e["note"] = c.note;
        cols.push_back(e);
    }
    return json{{"task", intake::to_string(task)}, {"metrics", cols}, {"meta", meta}};
}

std::string MetricReport::to_table() const {
    // aligned two-row table mirroring the published column order
    std::vector<std::string> names, values;
    for (const auto& c : columns) {
        names.push_back(c.name);
        values.push_back(c.value ? fmt(*c.value) : std::string("-"));
    }
    std::string head, row;
    for (std::size_t i = 0; i < names.size(); ++i) {
        const std::size_t w = std::max(names[i].size(), values[i].size()) + 2;
        head += names[i] + std::string(w - names[i].size(), ' ');
        row += values[i] + std::string(w - values[i].size(), ' ');
    }
    return head + "\n" + row + "\n";
}

MetricReport build_report(const ReportInputs& in) {
    MetricReport rep;
    rep.task = in.task;
    rep.meta["log_bases"] = {{"dse", "log2"}, {"ddc", "ln"}, {"idde", "ln"}};
    rep.meta["sdi_feature_extractor"] = metrics::kDefaultFeatureExtractor;
    rep.meta["ssim_pairs"] = "accepted image vs its pre-optimization original";
    rep.meta["ddc_reference"] = in.expand_mode ? "original class distribution" : "uniform";

    // CBI
    {
        metrics::ClassCounts cc;
        if (!in.class_counts.empty())
            for (const auto& [_, n] : in.class_counts) cc.counts.push_back(n);
        else
            for (const auto& [_, imgs] : in.class_images) cc.counts.push_back(imgs.size());
        std::uint64_t total = 0;
        for (auto n : cc.counts) total += n;
        if (!cc.counts.empty() && total > 0)
            rep.columns.push_back(with_pass("CBI", metrics::cbi(cc), 0.1, true));
        else
            rep.columns.push_back(info_only("CBI", std::nullopt, "no class counts"));
    }

    // SSIM averaged over (final, original) pairs
    {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& [final_path, orig_path] : in.original_of) {
            try {
                Image a = load_image(final_path);
                Image b = load_image(orig_path);
                if (!a.same_dims(b) || a.channels != b.channels)
                    b = toolpkg::resize(b, a.width, a.height, toolpkg::Interpolation::Bilinear);
                sum += metrics::ssim(a, b);
                ++n;
            } catch (const PipelineError&) {
                // undersized or unreadable pair contributes nothing
            }
        }
        if (n > 0)
            rep.columns.push_back(with_pass("SSIM", sum / static_cast<double>(n), 0.9, false));
        else
            rep.columns.push_back(info_only("SSIM", std::nullopt, "no original/final pairs"));
    }

    // ALR
    if (in.alr_fraction)
        rep.columns.push_back(with_pass("ALR", *in.alr_fraction, 0.95, false));
    else
        rep.columns.push_back(info_only("ALR", std::nullopt, "manifest generated; verdicts pending"));

    // DSE
    {
        std::map<std::string, std::uint64_t> by_source;
        for (const auto& s : in.source_ids) ++by_source[s];
        if (!by_source.empty()) {
            metrics::SourceCounts sc;
            for (const auto& [_, n] : by_source) sc.counts.push_back(n);
            rep.columns.push_back(info_only("DSE", metrics::dse(sc)));
        } else {
            rep.columns.push_back(info_only("DSE", std::nullopt, "no source accounting"));
        }
    }

    // SDI per class, averaged
    {
        double sum = 0.0;
        std::size_t n_classes = 0;
        for (const auto& [cls, imgs] : in.class_images) {
            if (imgs.size() < 2) continue;
            metrics::FeatureVectorSet fv;
            bool ok = true;
            for (const auto& p : imgs) {
                try {
                    fv.vectors.push_back(metrics::default_feature_vector(load_image(p)));
                } catch (const PipelineError&) {
                    ok = false;
                    break;
                }
            }
            if (!ok || fv.vectors.size() < 2) continue;
            sum += metrics::sdi(fv);
            ++n_classes;
        }
        if (n_classes > 0)
            rep.columns.push_back(info_only("SDI", sum / static_cast<double>(n_classes)));
        else
            rep.columns.push_back(info_only("SDI", std::nullopt, "needs >= 2 images in a class"));
    }

    // DDC
    {
        std::vector<std::string> names;
        if (!in.class_counts.empty())
            for (const auto& [cls, _] : in.class_counts) names.push_back(cls);
        else
            for (const auto& [cls, _] : in.class_images) names.push_back(cls);
        auto count_of = [&](const std::string& cls) -> double {
            if (!in.class_counts.empty()) {
                auto it = in.class_counts.find(cls);
                return it == in.class_counts.end() ? 0.0 : static_cast<double>(it->second);
            }
            auto it = in.class_images.find(cls);
            return it == in.class_images.end() ? 0.0 : static_cast<double>(it->second.size());
        };
        if (!names.empty()) {
            metrics::DistributionPair d;
            double total_p = 0.0, total_q = 0.0;
            for (const auto& cls : names) {
                double p = count_of(cls);
                double q = 1.0;
                if (in.expand_mode) {
                    auto it = in.original_class_counts.find(cls);
                    const double orig =
                        it == in.original_class_counts.end() ? 0.0 : static_cast<double>(it->second);
                    q = orig;
                    p += orig;  // expanded distribution = original + added
                }
                d.p.push_back(p);
                d.q.push_back(q);
                total_p += p;
                total_q += q;
            }
            if (total_p > 0 && total_q > 0) {
                for (auto& v : d.p) v /= total_p;
                for (auto& v : d.q) v /= total_q;
                try {
                    rep.columns.push_back(with_pass("DDC", metrics::ddc(d), 0.1, true));
                } catch (const UnsupportedSupport&) {
                    rep.columns.push_back(
                        info_only("DDC", std::nullopt, "reference lacks support for a class"));
                }
            } else {
                rep.columns.push_back(info_only("DDC", std::nullopt, "empty distribution"));
            }
        } else {
            rep.columns.push_back(info_only("DDC", std::nullopt, "no class counts"));
        }
    }

    if (in.task == intake::TaskType::Detection) {
        if (!in.instance_areas.empty())
            rep.columns.push_back(info_only("IDDE", metrics::idde(in.instance_areas)));
        else
            rep.columns.push_back(info_only("IDDE", std::nullopt, "no instances"));

        if (!in.inspected_ious.empty())
            rep.columns.push_back(with_pass("BQI", metrics::bqi(in.inspected_ious), 0.9, false));
        else
            rep.columns.push_back(info_only("BQI", std::nullopt, "inspection IoUs pending"));

        if (!in.occlusion_levels.empty()) {
            const auto r = metrics::osr(in.occlusion_levels);
            MetricValue m = info_only("OSR", r.rate);
            m.note = "partial(>0.3): " + std::to_string(r.partial) +
                     ", severe(>0.6): " + std::to_string(r.severe);
            rep.columns.push_back(m);
        } else {
            rep.columns.push_back(info_only("OSR", std::nullopt, "no occlusion data"));
        }
    }

    if (in.task == intake::TaskType::SemanticSeg || in.task == intake::TaskType::InstanceSeg ||
        in.task == intake::TaskType::PanopticSeg) {
        double esi_sum = 0.0;
        std::size_t esi_n = 0;
        for (const auto& [img_path, mask_path] : in.image_mask_pairs) {
            try {
                const Image img = load_image(img_path);
                const Mask mask = load_png_indices(mask_path);
                const auto edges = metrics::mask_boundary_pixels(mask);
                if (edges.empty()) continue;
                esi_sum += metrics::esi(img, edges);
                ++esi_n;
            } catch (const PipelineError&) {
            }
        }
        if (esi_n > 0)
            rep.columns.push_back(info_only("ESI", esi_sum / static_cast<double>(esi_n)));
        else
            rep.columns.push_back(info_only("ESI", std::nullopt, "no image/mask pairs"));

        if (!in.annotator_mask_pairs.empty()) {
            double sum = 0.0;
            std::size_t n = 0;
            for (const auto& [a, b] : in.annotator_mask_pairs) {
                try {
                    sum += metrics::acs_dice(a, b);
                    ++n;
                } catch (const PipelineError&) {
                }
            }
            if (n > 0)
                rep.columns.push_back(with_pass("ACS", sum / static_cast<double>(n), 0.85, false));
            else
                rep.columns.push_back(info_only("ACS", std::nullopt, "no comparable pairs"));
        } else {
            rep.columns.push_back(info_only("ACS", std::nullopt, "second annotator pending"));
        }

        if (!in.pixel_class_counts.empty()) {
            std::vector<std::uint64_t> counts;
            for (const auto& [_, n] : in.pixel_class_counts) counts.push_back(n);
            rep.columns.push_back(with_pass("PCB", metrics::pcb(counts), 0.8, false));
        } else {
            rep.columns.push_back(info_only("PCB", std::nullopt, "no pixel counts"));
        }
    }

    return rep;
}

}  // namespace dsa::report
