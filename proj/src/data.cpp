#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include "vtol/data.hpp"

namespace vtol::data {

namespace {

// Portable draws: the standard distributions are implementation-defined.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <class T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[rng() % i]);
    }
}

const char* const kColumns[] = {"v",  "alpha", "omega_star", "omega_port", "theta_star", "theta_port", "theta_elev",
                                "CL", "CD",    "Cl",         "Cm",         "valid",      "split"};
constexpr int kColumnCount = 13;

}  // namespace

std::vector<FlightState> lhs_sample(const Bounds& bounds, int n, std::uint64_t seed) {
    if (n < 1) {
        throw std::invalid_argument("lhs_sample: n must be at least 1");
    }
    std::mt19937_64 rng(seed);
    std::vector<std::array<double, FlightState::kInputs>> rows(static_cast<std::size_t>(n));
    for (std::size_t d = 0; d < FlightState::kInputs; ++d) {
        std::vector<int> strata(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) strata[static_cast<std::size_t>(i)] = i;
        shuffle(strata, rng);
        const double lo = bounds.lower[d];
        const double hi = bounds.upper[d];
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const double t = (strata[i] + unit(rng)) / n;
            rows[i][d] = std::clamp(lo + t * (hi - lo), lo, hi);
        }
    }
    std::vector<FlightState> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(FlightState::from_array(r));
    return out;
}

// ---- oracle -----------------------------------------------------------------

std::string OracleConfig::canonical() const {
    return fmt::format(
        "version={};polar_slope_factor={:.17g};polar_cd={:.17g};polar_cl_max={:.17g};cl_max={:.17g};"
        "cd_parasite={:.17g};cd_k={:.17g};cm_offset={:.17g};cm_elev={:.17g};cm_v_ref={:.17g};"
        "wash_scale={:.17g};hover_rpm={:.17g}",
        version, polar_slope_factor, polar_cd, polar_cl_max, cl_max, cd_parasite, cd_k, cm_offset, cm_elev, cm_v_ref,
        wash_scale, hover_rpm);
}

std::string OracleConfig::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return fmt::format("{:016x}", h);
}

OracleConfig load_oracle_config(const std::string& path) {
    YAML::Node root;
    try {
        root = YAML::LoadFile(path);
    } catch (const YAML::Exception& e) {
        throw std::runtime_error("cannot read oracle config " + path + ": " + e.what());
    }
    OracleConfig c;
    auto read = [&](const char* key, auto& out) {
        if (root[key]) out = root[key].as<std::remove_reference_t<decltype(out)>>();
    };
    read("version", c.version);
    read("polar_slope_factor", c.polar_slope_factor);
    read("polar_cd", c.polar_cd);
    read("polar_cl_max", c.polar_cl_max);
    read("cl_max", c.cl_max);
    read("cd_parasite", c.cd_parasite);
    read("cd_k", c.cd_k);
    read("cm_offset", c.cm_offset);
    read("cm_elev", c.cm_elev);
    read("cm_v_ref", c.cm_v_ref);
    read("wash_scale", c.wash_scale);
    read("hover_rpm", c.hover_rpm);
    if (c.cl_max <= 0.0 || c.cm_v_ref <= 0.0) {
        throw std::invalid_argument("oracle config: cl_max and cm_v_ref must be positive");
    }
    return c;
}

namespace {

piml::PhysicsOptions oracle_options(const OracleConfig& c) {
    piml::PhysicsOptions o;
    o.polar.slope_factor = c.polar_slope_factor;
    o.polar.cd = c.polar_cd;
    o.polar.cl_max = c.polar_cl_max;
    o.wash_scale = c.wash_scale;
    o.hover_rpm = c.hover_rpm;
    return o;
}

}  // namespace

Oracle::Oracle(const geometry::AircraftConfig& aircraft, OracleConfig cfg)
    : cfg_(std::move(cfg)), physics_(aircraft, oracle_options(cfg_)) {}

OracleResult Oracle::evaluate(const FlightState& f) const {
    const piml::LfResult lf = piml::lf_forward(physics_, f);
    OracleResult r;
    r.converged = lf.converged;
    AeroCoefficients c = lf.coefficients;
    c.CL = cfg_.cl_max * std::tanh(c.CL / cfg_.cl_max);
    c.CD += cfg_.cd_parasite + cfg_.cd_k * c.CL * c.CL;
    c.Cm += cfg_.cm_offset + cfg_.cm_elev * f.theta_elev * f.v / cfg_.cm_v_ref;
    r.coefficients = c;
    return r;
}

// ---- dataset ----------------------------------------------------------------

const char* to_string(Split s) {
    switch (s) {
        case Split::Train:
            return "train";
        case Split::Val:
            return "val";
        case Split::None:
            break;
    }
    return "none";
}

int Dataset::valid_count() const {
    return static_cast<int>(std::count_if(records.begin(), records.end(), [](const auto& r) { return r.valid; }));
}

int Dataset::count(Split s) const {
    return static_cast<int>(std::count_if(records.begin(), records.end(), [s](const auto& r) { return r.split == s; }));
}

namespace {

template <class Pred>
piml::Batch select(const std::vector<SampleRecord>& records, int n, Pred keep) {
    piml::Batch b;
    b.x.resize(n, FlightState::kInputs);
    b.y.resize(n, AeroCoefficients::kOutputs);
    int i = 0;
    for (const auto& r : records) {
        if (!keep(r)) continue;
        const auto x = r.inputs.as_array();
        const auto y = r.targets.as_array();
        for (int c = 0; c < FlightState::kInputs; ++c) b.x(i, c) = x[static_cast<std::size_t>(c)];
        for (int c = 0; c < AeroCoefficients::kOutputs; ++c) b.y(i, c) = y[static_cast<std::size_t>(c)];
        ++i;
    }
    return b;
}

}  // namespace

piml::Batch Dataset::batch(Split s) const {
    return select(records, count(s), [s](const SampleRecord& r) { return r.split == s; });
}

piml::Batch Dataset::valid_batch() const {
    return select(records, valid_count(), [](const SampleRecord& r) { return r.valid; });
}

namespace {

double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

void filter_outliers(std::vector<SampleRecord>& records, double fence) {
    for (auto& r : records) {
        for (double y : r.targets.as_array()) {
            if (!std::isfinite(y)) r.valid = false;
        }
    }
    std::array<std::pair<double, double>, AeroCoefficients::kOutputs> limits;
    for (std::size_t k = 0; k < limits.size(); ++k) {
        std::vector<double> col;
        for (const auto& r : records) {
            if (r.valid) col.push_back(r.targets.as_array()[k]);
        }
        if (col.empty()) return;
        const double q1 = quantile(col, 0.25);
        const double q3 = quantile(col, 0.75);
        const double iqr = q3 - q1;
        limits[k] = {q1 - fence * iqr, q3 + fence * iqr};
    }
    for (auto& r : records) {
        const auto y = r.targets.as_array();
        for (std::size_t k = 0; k < limits.size(); ++k) {
            if (y[k] < limits[k].first || y[k] > limits[k].second) r.valid = false;
        }
    }
}

Dataset generate_dataset(const Oracle& oracle, int n, std::uint64_t seed) {
    if (n < 10) {
        throw std::invalid_argument("generate_dataset: n must be at least 10");
    }
    const auto inputs = lhs_sample(Bounds::study(), n, seed);
    Dataset d;
    d.seed = seed;
    d.oracle_version = oracle.config().version;
    d.oracle_hash = oracle.config().hash();
    d.records.resize(inputs.size());
    const std::string tag = fmt::format("{}/{}/seed={}", d.oracle_version, d.oracle_hash, seed);
#pragma omp parallel for schedule(dynamic, 1)
    for (int i = 0; i < n; ++i) {
        SampleRecord& r = d.records[static_cast<std::size_t>(i)];
        r.inputs = inputs[static_cast<std::size_t>(i)];
        r.provenance = tag;
        try {
            const OracleResult o = oracle.evaluate(r.inputs);
            r.targets = o.coefficients;
            r.valid = o.converged;
        } catch (const std::exception&) {
            const double nan = std::numeric_limits<double>::quiet_NaN();
            r.targets = AeroCoefficients{nan, nan, nan, nan};
            r.valid = false;
        }
    }
    filter_outliers(d.records);
    if (d.valid_count() < 2) {
        throw std::runtime_error(fmt::format("generate_dataset: only {} valid records", d.valid_count()));
    }
    return d;
}

void split(Dataset& d, int n_train, std::uint64_t seed) {
    const int valid = d.valid_count();
    if (n_train < 1 || n_train >= valid) {
        throw std::invalid_argument(
            fmt::format("split: n_train must be in [1, {}) for {} valid records, got {}", valid, valid, n_train));
    }
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < d.records.size(); ++i) {
        d.records[i].split = Split::None;
        if (d.records[i].valid) idx.push_back(i);
    }
    std::mt19937_64 rng(seed);
    shuffle(idx, rng);
    for (std::size_t k = 0; k < idx.size(); ++k) {
        d.records[idx[k]].split = static_cast<int>(k) < n_train ? Split::Train : Split::Val;
    }
    d.n_train = n_train;
}

// ---- files ------------------------------------------------------------------

void save_dataset(const Dataset& d, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot write dataset " + path);
    }
    for (int c = 0; c < kColumnCount; ++c) os << kColumns[c] << (c + 1 < kColumnCount ? ',' : '\n');
    for (const auto& r : d.records) {
        for (double x : r.inputs.as_array()) os << fmt::format("{:.17g},", x);
        for (double y : r.targets.as_array()) os << fmt::format("{:.17g},", y);
        os << (r.valid ? 1 : 0) << ',' << to_string(r.split) << '\n';
    }
    if (!os) {
        throw std::runtime_error("failed writing dataset " + path);
    }
}

namespace {

std::vector<std::string> fields(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) out.push_back(f);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& s, int line, const char* column) {
    if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size()) {
        throw std::runtime_error(fmt::format("dataset line {}: bad value '{}' in column {}", line, s, column));
    }
    return v;
}

std::filesystem::path sidecar_of(const std::string& csv) {
    return std::filesystem::path(csv).replace_extension(".json");
}

}  // namespace

Dataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cannot open dataset " + path);
    }
    std::string line;
    std::getline(is, line);
    const auto header = fields(line);
    for (int c = 0; c < kColumnCount; ++c) {
        if (static_cast<int>(header.size()) <= c || header[static_cast<std::size_t>(c)] != kColumns[c]) {
            throw std::runtime_error(fmt::format("dataset header: expected column '{}' at position {}, found '{}'",
                                                 kColumns[c], c + 1,
                                                 static_cast<int>(header.size()) > c ? header[static_cast<std::size_t>(c)]
                                                                                     : std::string("<missing>")));
        }
    }
    if (static_cast<int>(header.size()) != kColumnCount) {
        throw std::runtime_error(fmt::format("dataset header: unexpected column '{}'", header[kColumnCount]));
    }
    Dataset d;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = fields(line);
        if (static_cast<int>(f.size()) != kColumnCount) {
            throw std::runtime_error(
                fmt::format("dataset line {}: expected {} fields, found {}", lineno, kColumnCount, f.size()));
        }
        SampleRecord r;
        std::array<double, FlightState::kInputs> x{};
        std::array<double, AeroCoefficients::kOutputs> y{};
        for (int c = 0; c < 7; ++c) x[static_cast<std::size_t>(c)] = parse_double(f[static_cast<std::size_t>(c)], lineno, kColumns[c]);
        for (int c = 0; c < 4; ++c) y[static_cast<std::size_t>(c)] = parse_double(f[static_cast<std::size_t>(7 + c)], lineno, kColumns[7 + c]);
        r.inputs = FlightState::from_array(x);
        r.targets = AeroCoefficients::from_array(y);
        if (f[11] != "0" && f[11] != "1") {
            throw std::runtime_error(fmt::format("dataset line {}: valid must be 0 or 1", lineno));
        }
        r.valid = f[11] == "1";
        if (f[12] == "train") {
            r.split = Split::Train;
        } else if (f[12] == "val") {
            r.split = Split::Val;
        } else if (f[12] == "none") {
            r.split = Split::None;
        } else {
            throw std::runtime_error(fmt::format("dataset line {}: unknown split '{}'", lineno, f[12]));
        }
        if (r.split != Split::None && !r.valid) {
            throw std::runtime_error(fmt::format("dataset line {}: invalid record assigned to a split", lineno));
        }
        d.records.push_back(std::move(r));
    }
    d.n_train = d.count(Split::Train);
    const auto side = sidecar_of(path);
    if (std::filesystem::exists(side)) {
        std::ifstream js(side);
        const auto j = nlohmann::json::parse(js);
        d.seed = j.value("seed", std::uint64_t{0});
        d.oracle_version = j.value("oracle_version", std::string());
        d.oracle_hash = j.value("oracle_hash", std::string());
        const std::string tag = fmt::format("{}/{}/seed={}", d.oracle_version, d.oracle_hash, d.seed);
        for (auto& r : d.records) r.provenance = tag;
    }
    return d;
}

void save_sidecar(const Dataset& d, const std::string& path) {
    nlohmann::json j;
    j["seed"] = d.seed;
    j["oracle_version"] = d.oracle_version;
    j["oracle_hash"] = d.oracle_hash;
    j["n"] = d.records.size();
    j["valid"] = d.valid_count();
    j["invalid"] = static_cast<int>(d.records.size()) - d.valid_count();
    j["train"] = d.count(Split::Train);
    j["val"] = d.count(Split::Val);
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw std::runtime_error("cannot write " + path);
    }
    os << j.dump(2) << '\n';
}

}  // namespace vtol::data
