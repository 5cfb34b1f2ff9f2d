#include "vfo/classify.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "vfo/errors.hpp"

#include <json.hpp>

namespace vfo {

namespace {

bool is_one_to_one(const EntrainmentRatio& e) { return e.resolved && e.n == 1 && e.m == 1; }

}  // namespace

int AttractorConstraint::specificity() const {
    int s = 0;
    if (kind) ++s;
    if (cycle_count) ++s;
    if (entrainment != EntrainmentForm::any) ++s;
    return s;
}

bool AttractorConstraint::matches(const AttractorReport& rep) const {
    if (rep.diverged) return false;
    if (kind && rep.kind != *kind) return false;
    if (cycle_count && rep.cycle_count != *cycle_count) return false;
    if (entrainment == EntrainmentForm::one_to_one && !is_one_to_one(rep.entrainment))
        return false;
    if (entrainment == EntrainmentForm::non_one_to_one && is_one_to_one(rep.entrainment))
        return false;
    return true;
}

std::vector<PathologyRegion> default_regions() {
    std::vector<PathologyRegion> regions;
    regions.push_back(PathologyRegion{
        "Normal",
        Interval{0.0, 0.5, false, true},
        Interval{0.25, 1.0, true, false},
        AttractorConstraint{AttractorKind::limit_cycle, 1, EntrainmentForm::one_to_one}});
    regions.push_back(PathologyRegion{
        "Neoplasm",
        Interval{0.5, 0.7},
        Interval{0.325, 0.45},
        AttractorConstraint{AttractorKind::limit_cycle, 1, EntrainmentForm::one_to_one}});
    regions.push_back(PathologyRegion{
        "Phonotrauma",
        Interval{0.5, 0.7},
        Interval{0.25, 0.325},
        AttractorConstraint{AttractorKind::multi_limit_cycle, 2, EntrainmentForm::one_to_one}});
    regions.push_back(PathologyRegion{
        "VocalPalsy",
        Interval{0.75, 0.95},
        Interval{0.35, 0.45},
        AttractorConstraint{AttractorKind::torus, std::nullopt,
                            EntrainmentForm::non_one_to_one}});
    return regions;
}

namespace {

bool intervals_overlap(const Interval& a, const Interval& b) {
    const double lo = std::max(a.lo, b.lo);
    const double hi = std::min(a.hi, b.hi);
    if (lo > hi) return false;
    if (lo < hi) return true;
    // touching endpoints overlap only if both sides include the shared point
    return a.contains(lo) && b.contains(lo);
}

}  // namespace

void validate_regions(const std::vector<PathologyRegion>& regions) {
    if (regions.empty()) throw ConfigError("region table is empty");
    std::set<std::string> labels;
    for (const auto& r : regions) {
        if (r.label.empty()) throw ConfigError("region label must not be empty");
        if (!labels.insert(r.label).second)
            throw ConfigError("duplicate region label: " + r.label);
        if (!(r.delta_box.lo <= r.delta_box.hi) || !(r.alpha_box.lo <= r.alpha_box.hi))
            throw ConfigError("empty box in region: " + r.label);
    }
    for (std::size_t i = 0; i < regions.size(); ++i)
        for (std::size_t j = i + 1; j < regions.size(); ++j) {
            const auto& a = regions[i];
            const auto& b = regions[j];
            if (!intervals_overlap(a.delta_box, b.delta_box)) continue;
            if (!intervals_overlap(a.alpha_box, b.alpha_box)) continue;
            if (a.required_attractor == b.required_attractor)
                throw ConfigError("regions " + a.label + " and " + b.label +
                                  " overlap with identical attractor constraints");
        }
}

Classification classify(const ModelParams& params, const AttractorReport& report,
                        const std::vector<PathologyRegion>& regions) {
    validate_regions(regions);
    Classification out;
    out.label = "Unclassified";
    out.distances.reserve(regions.size());

    const double d = params.delta;
    const double a = params.alpha;
    const bool finite = std::isfinite(d) && std::isfinite(a);

    for (const auto& r : regions) {
        auto axis_dist = [](const Interval& box, double x) {
            if (box.contains(x)) return 0.0;
            const double below = box.lo - x;
            const double above = x - box.hi;
            const double gap = std::max({below, above, 0.0});
            return gap / std::max(box.width(), 1e-12);
        };
        out.distances.push_back(finite ? std::hypot(axis_dist(r.delta_box, d),
                                                    axis_dist(r.alpha_box, a))
                                       : std::numeric_limits<double>::infinity());
    }
    if (!finite) return out;

    int best = -1;
    int best_spec = -1;
    for (std::size_t i = 0; i < regions.size(); ++i) {
        const auto& r = regions[i];
        if (!r.delta_box.contains(d) || !r.alpha_box.contains(a)) continue;
        if (r.required_attractor && !r.required_attractor->matches(report)) continue;
        const int spec = r.required_attractor ? r.required_attractor->specificity() : 0;
        if (spec > best_spec) {
            best_spec = spec;
            best = static_cast<int>(i);
        }
    }
    if (best >= 0) {
        out.label = regions[static_cast<std::size_t>(best)].label;
        out.matched_region = best;
        out.attractor_agrees =
            !regions[static_cast<std::size_t>(best)].required_attractor ||
            regions[static_cast<std::size_t>(best)].required_attractor->matches(report);
    }
    return out;
}

std::vector<PathologyRegion> load_regions_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open region table: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("invalid region table JSON: " + std::string(e.what()));
    }
    if (!j.is_array()) throw ConfigError("region table must be a JSON array");

    std::vector<PathologyRegion> regions;
    for (const auto& item : j) {
        PathologyRegion r;
        try {
            r.label = item.at("label").get<std::string>();
            r.delta_box.lo = item.at("delta_min").get<double>();
            r.delta_box.hi = item.at("delta_max").get<double>();
            r.alpha_box.lo = item.at("alpha_min").get<double>();
            r.alpha_box.hi = item.at("alpha_max").get<double>();
            r.delta_box.lo_open = item.value("delta_min_open", false);
            r.delta_box.hi_open = item.value("delta_max_open", false);
            r.alpha_box.lo_open = item.value("alpha_min_open", false);
            r.alpha_box.hi_open = item.value("alpha_max_open", false);
            if (item.contains("kind") || item.contains("cycle_count") ||
                item.contains("entrainment")) {
                AttractorConstraint c;
                if (item.contains("kind")) {
                    const auto kind = attractor_kind_from_string(item.at("kind").get<std::string>());
                    if (!kind)
                        throw ConfigError("unknown attractor kind in region " + r.label);
                    c.kind = *kind;
                }
                if (item.contains("cycle_count"))
                    c.cycle_count = item.at("cycle_count").get<int>();
                if (item.contains("entrainment")) {
                    const auto e = item.at("entrainment").get<std::string>();
                    if (e == "1:1")
                        c.entrainment = EntrainmentForm::one_to_one;
                    else if (e == "non-1:1")
                        c.entrainment = EntrainmentForm::non_one_to_one;
                    else if (e == "any")
                        c.entrainment = EntrainmentForm::any;
                    else
                        throw ConfigError("unknown entrainment form in region " + r.label);
                }
                r.required_attractor = c;
            }
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("invalid region entry: " + std::string(e.what()));
        }
        regions.push_back(std::move(r));
    }
    validate_regions(regions);
    return regions;
}

}
