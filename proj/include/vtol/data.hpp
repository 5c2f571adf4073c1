#pragma once

// Latin-hypercube sampling, the synthetic high-fidelity oracle, validity
// filtering, splits and dataset files.

#include <cstdint>
#include <string>
#include <vector>

#include "vtol/piml.hpp"
#include "vtol/types.hpp"

namespace vtol::data {

inline constexpr std::uint64_t kDefaultSeed = 7;
inline constexpr int kDefaultSamples = 100;
inline constexpr int kDefaultTrain = 70;

/// One sample per stratum per dimension; strata shuffled and jittered from
/// `seed`. Throws std::invalid_argument for n < 1.
std::vector<FlightState> lhs_sample(const Bounds& bounds, int n, std::uint64_t seed);

/// Perturbation constants of the oracle. Every field enters the hash.
struct OracleConfig {
    std::string version = "oracle-1";
    double polar_slope_factor = 1.15;
    double polar_cd = 0.03;
    double polar_cl_max = 1.2;
    double cl_max = 1.4;            ///< C_L <- cl_max tanh(C_L / cl_max)
    double cd_parasite = 0.03;      ///< added C_D = cd_parasite + cd_k C_L^2
    double cd_k = 0.05;
    double cm_offset = -0.02;       ///< added C_m = cm_offset + cm_elev theta_elev v / cm_v_ref
    double cm_elev = -0.004;
    double cm_v_ref = 45.0;
    double wash_scale = 0.9;
    double hover_rpm = 5000.0;

    /// FNV-1a over the canonical text form, as 16 hex digits.
    [[nodiscard]] std::string hash() const;
    [[nodiscard]] std::string canonical() const;
};

/// YAML file with any subset of the OracleConfig keys.
OracleConfig load_oracle_config(const std::string& path);

struct OracleResult {
    AeroCoefficients coefficients;
    bool converged = true;
};

class Oracle {
public:
    Oracle(const geometry::AircraftConfig& aircraft, OracleConfig cfg = {});
    [[nodiscard]] OracleResult evaluate(const FlightState& f) const;
    [[nodiscard]] const OracleConfig& config() const { return cfg_; }

private:
    OracleConfig cfg_;
    piml::Physics physics_;
};

enum class Split { None, Train, Val };
const char* to_string(Split s);

struct SampleRecord {
    FlightState inputs;
    AeroCoefficients targets;
    bool valid = true;
    Split split = Split::None;
    std::string provenance;
};

struct Dataset {
    std::vector<SampleRecord> records;
    std::uint64_t seed = 0;
    std::string oracle_version;
    std::string oracle_hash;
    int n_train = 0;

    [[nodiscard]] int valid_count() const;
    [[nodiscard]] int count(Split s) const;
    [[nodiscard]] piml::Batch batch(Split s) const;
    /// Every valid record in file order.
    [[nodiscard]] piml::Batch valid_batch() const;
};

/// Marks records invalid when a target is non-finite or lies beyond
/// `fence` interquartile ranges outside the quartiles of the valid set.
void filter_outliers(std::vector<SampleRecord>& records, double fence = 5.0);

/// LHS inputs, oracle targets, validity filter. Throws std::runtime_error
/// when fewer than two records survive.
Dataset generate_dataset(const Oracle& oracle, int n, std::uint64_t seed);

/// Seeded shuffle of the valid records; the first n_train go to training.
void split(Dataset& d, int n_train, std::uint64_t seed);

void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);
/// Provenance sidecar: seed, oracle version and hash, counts.
void save_sidecar(const Dataset& d, const std::string& path);

}  // namespace vtol::data
