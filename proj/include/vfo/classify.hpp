#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vfo/model.hpp"
#include "vfo/phase.hpp"

namespace vfo {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool lo_open = false;
    bool hi_open = false;

    bool contains(double x) const {
        if (lo_open ? !(x > lo) : !(x >= lo)) return false;
        if (hi_open ? !(x < hi) : !(x <= hi)) return false;
        return true;
    }
    double width() const { return hi - lo; }
};

enum class EntrainmentForm { any, one_to_one, non_one_to_one };

struct AttractorConstraint {
    std::optional<AttractorKind> kind;
    std::optional<int> cycle_count;
    EntrainmentForm entrainment = EntrainmentForm::any;

    int specificity() const;
    bool matches(const AttractorReport& rep) const;
    bool operator==(const AttractorConstraint&) const = default;
};

struct PathologyRegion {
    std::string label;
    Interval delta_box;
    Interval alpha_box;
    std::optional<AttractorConstraint> required_attractor;
};

struct Classification {
    std::string label;                 // region label or "Unclassified"
    int matched_region = -1;           // index into the region table, -1 if none
    bool attractor_agrees = false;
    std::vector<double> distances;     // per-region normalized box distance of (delta, alpha)
};

// the four built-in regions widened from the reference parameter table
std::vector<PathologyRegion> default_regions();

// throws ConfigError on empty boxes, duplicate labels, or overlapping boxes
// whose attractor constraints are identical (undecidable overlap)
void validate_regions(const std::vector<PathologyRegion>& regions);

Classification classify(const ModelParams& params, const AttractorReport& report,
                        const std::vector<PathologyRegion>& regions);

// JSON array of region objects; schema documented in the README
std::vector<PathologyRegion> load_regions_json(const std::string& path);

}
