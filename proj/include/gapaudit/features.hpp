#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gapaudit/curate.hpp"
#include "gapaudit/element_table.hpp"
#include "gapaudit/formula.hpp"
#include "gapaudit/matrix.hpp"

namespace gapaudit::features {

struct FeatureConfig {
    double epsilon_stabilizer = 1e-12;
    double sp_promotion_clip_max = 10.0;
    // Statistic kinds for the elemental blocks, applied in this fixed order.
    std::vector<std::string> elemental_stat_kinds = {"mean", "min", "max", "range", "std"};
    // Elemental properties to expand into statistics blocks (phase III).
    std::vector<std::string> elemental_properties = {"chi", "radius_pm", "ns", "np", "nd", "nf"};

    void validate() const;
};

struct NamedVector {
    std::vector<std::string> names;
    std::vector<double> values;
};

// The 12 fundamental descriptors, fixed order.
NamedVector phase1_features(const curate::CuratedRecord& record);
const std::vector<std::string>& phase1_feature_names();

// The 7 engineered physical descriptors (dielectric response, Pugh ratio,
// wave/stiffness proxies, stability-stiffness coupling).
NamedVector phase2_features(const curate::CuratedRecord& record, const FeatureConfig& cfg);
const std::vector<std::string>& phase2_feature_names();

// The 11 chemical/orbital/structural descriptors computed from a composition
// and the element table. max/min statistics range over distinct elements;
// mean/std are composition-weighted.
NamedVector phase3_descriptors(const Composition& comp, const ElementTable& table,
                               const FeatureConfig& cfg);
const std::vector<std::string>& phase3_descriptor_names();

// Weighted mean/min/max/range/std of one elemental property over a composition.
NamedVector elemental_stats(const Composition& comp, const std::string& property,
                            const ElementTable& table,
                            const std::vector<std::string>& kinds);

// Assembles the per-phase matrix: I = 12 columns, II = I + 7,
// III = I + 11 descriptors + elemental statistic blocks.
FeatureMatrix build_matrix(const std::vector<curate::CuratedRecord>& records, Phase phase,
                           const FeatureConfig& cfg,
                           const ElementTable& table = ElementTable::embedded());

}  // namespace gapaudit::features
