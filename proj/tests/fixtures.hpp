#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "evstar/catalog.hpp"
#include "evstar/scene_synth.hpp"
#include "evstar/sky.hpp"
#include "evstar/sourcefind.hpp"

namespace fixture {

using evstar::FieldSpec;

struct Field {
    evstar::SyntheticScene scene;
    evstar::EventStream stream;
    evstar::GroundTruth truth;
    evstar::Catalog catalog;
};

inline evstar::SyntheticScene make_scene(const FieldSpec& f) { return evstar::make_field_scene(f); }

inline evstar::Catalog catalog_of(const evstar::SyntheticScene& s) {
    evstar::Catalog c;
    for (const auto& st : s.stars) c.push_back({st.id, st.position, st.magnitude});
    return c;
}

inline Field make_field(const FieldSpec& f) {
    Field out;
    out.scene = make_scene(f);
    auto [stream, truth] = evstar::synthesize(out.scene);
    out.stream = std::move(stream);
    out.truth = std::move(truth);
    out.catalog = catalog_of(out.scene);
    return out;
}

/// Index of the truth star nearest to p at time t (seconds), if within tol px.
inline std::optional<std::size_t> nearest_star(const evstar::GroundTruth& truth, evstar::Vec2 p, double t_s,
                                               double tol) {
    std::optional<std::size_t> best;
    double bd = tol;
    for (std::size_t i = 0; i < truth.stars.size(); ++i) {
        const double d = (truth.star_position(i, t_s) - p).norm();
        if (d <= bd) {
            bd = d;
            best = i;
        }
    }
    return best;
}

}  // namespace fixture
