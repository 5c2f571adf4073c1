#include <doctest.h>

#include <algorithm>

#include "vtol/checks.hpp"

using namespace vtol;
using namespace vtol::checks;

namespace {

const piml::Physics& physics() {
    static const piml::Physics ph(geometry::AircraftConfig::nominal());
    return ph;
}

}  // namespace

TEST_SUITE("checks") {

TEST_CASE("check names cover every input and loss") {
    const auto names = gradcheck_names();
    CHECK(names.size() == 10);
    CHECK(std::find(names.begin(), names.end(), "pipeline-alpha") != names.end());
    CHECK(std::find(names.begin(), names.end(), "pipeline-theta-elev") != names.end());
    CHECK(default_threshold("loss-ann") == 1e-6);
    CHECK(default_threshold("pipeline-v") == 1e-4);
    CHECK_THROWS_AS(run_gradcheck(physics(), "pipeline-beta"), std::invalid_argument);
}

TEST_CASE("every gradient check passes its default threshold") {
    for (const auto& n : gradcheck_names()) {
        const CheckResult r = run_gradcheck(physics(), n);
        INFO(n << " " << r.max_rel_error << " " << r.worst);
        CHECK(r.passed());
    }
}

TEST_CASE("an unreachable threshold is reported as a failure") {
    const CheckResult r = run_gradcheck(physics(), "pipeline-alpha", 1e-12);
    CHECK(r.threshold == 1e-12);
    CHECK(r.max_rel_error > 0.0);
    CHECK_FALSE(r.passed());
}

}
