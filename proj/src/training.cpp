#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

#include "vtol/piml.hpp"

namespace vtol::piml {

using ad::Var;

namespace {

FlightState state_of(const Eigen::MatrixXd& x, int i) {
    std::array<double, FlightState::kInputs> a{};
    for (int c = 0; c < FlightState::kInputs; ++c) {
        a[static_cast<std::size_t>(c)] = x(i, c);
    }
    return FlightState::from_array(a);
}

struct SampleTape {
    ad::Tape tape;
    std::vector<Var> in;
    Var out;
};

using SampleFn = std::function<std::array<Var, 4>(int, std::span<const Var>)>;

// Runs fn once per row of `o` on a private tape and exposes the stacked
// outputs (n x 4) as one node of the batch tape. The backward sweep seeds
// every private tape with its row of the adjoint.
Var batch_physics(Var o, const SampleFn& fn) {
    ad::Tape& t = *o.tape();
    const int n = o.shape().rows;
    const int k = o.shape().cols;
    const std::vector<double> ov(o.values().begin(), o.values().end());
    auto samples = std::make_shared<std::vector<std::unique_ptr<SampleTape>>>(static_cast<std::size_t>(n));
    std::vector<double> values(static_cast<std::size_t>(4 * n));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic, 1)
    for (int i = 0; i < n; ++i) {
        try {
            auto s = std::make_unique<SampleTape>();
            for (int c = 0; c < k; ++c) {
                s->in.push_back(s->tape.variable(ov[static_cast<std::size_t>(i * k + c)]));
            }
            const auto out = fn(i, s->in);
            s->out = ad::stack(out);
            for (int c = 0; c < 4; ++c) {
                values[static_cast<std::size_t>(4 * i + c)] = out[static_cast<std::size_t>(c)].value();
            }
            (*samples)[static_cast<std::size_t>(i)] = std::move(s);
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    const ad::NodeId io = o.id();
    return t.record_custom("batch_physics", std::move(values), ad::Shape{n, 4},
                           [samples, io, n, k](ad::Tape& tp, ad::NodeId self) {
                               const auto g = tp.adjoint(self);
                               auto go = tp.adjoint_mut(io);
#pragma omp parallel for schedule(dynamic, 1)
                               for (int i = 0; i < n; ++i) {
                                   const double seed[4] = {g[static_cast<std::size_t>(4 * i)],
                                                           g[static_cast<std::size_t>(4 * i + 1)],
                                                           g[static_cast<std::size_t>(4 * i + 2)],
                                                           g[static_cast<std::size_t>(4 * i + 3)]};
                                   if (seed[0] == 0.0 && seed[1] == 0.0 && seed[2] == 0.0 && seed[3] == 0.0) {
                                       continue;
                                   }
                                   SampleTape& s = *(*samples)[static_cast<std::size_t>(i)];
                                   s.tape.backward(s.out, seed);
                                   for (int c = 0; c < k; ++c) {
                                       go[static_cast<std::size_t>(i * k + c)] += s.tape.adjoint(s.in[static_cast<std::size_t>(c)])[0];
                                   }
                               }
                           });
}

std::array<Var, 4> scaled(const std::array<Var, 4>& y, const nn::Scaler& s) {
    std::array<Var, 4> out;
    for (std::size_t c = 0; c < 4; ++c) {
        out[c] = (y[c] - s.mean[c]) * (1.0 / s.stdev[c]);
    }
    return out;
}

}  // namespace

std::vector<double> bem_induced_prior(const Physics& ph, const Batch& batch) {
    const int n = batch.size();
    if (n == 0) {
        throw std::invalid_argument("bem_induced_prior: empty batch");
    }
    std::vector<std::array<double, 6>> sums(static_cast<std::size_t>(n));
    const int ns = ph.stations();
#pragma omp parallel for schedule(dynamic, 1)
    for (int i = 0; i < n; ++i) {
        const RotorState rs = ph.rotors(state_of(batch.x, i));
        auto& s = sums[static_cast<std::size_t>(i)];
        s.fill(0.0);
        for (std::size_t d = 0; d < rs.discs.size(); ++d) {
            const auto g = static_cast<std::size_t>(ph.group(static_cast<int>(d)));
            for (int k = 0; k < ns; ++k) {
                const std::size_t j = d * static_cast<std::size_t>(ns) + static_cast<std::size_t>(k);
                s[2 * g] += rs.v_a[j] / ns;
                s[2 * g + 1] += rs.v_t[j] / ns;
            }
        }
    }
    std::array<int, kGroups> discs{};
    for (int d = 0; d < static_cast<int>(ph.aircraft().props.size()); ++d) ++discs[static_cast<std::size_t>(ph.group(d))];
    std::vector<double> prior(6, 0.0);
    for (const auto& s : sums) {
        for (std::size_t j = 0; j < 6; ++j) prior[j] += s[j];
    }
    for (std::size_t j = 0; j < 6; ++j) {
        prior[j] /= static_cast<double>(n) * discs[j / 2];
        // Idle rotors would give a zero magnitude, outside the softplus range.
        prior[j] = std::max(prior[j], 1e-3);
    }
    return prior;
}

double mse_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target, const nn::Scaler& target_scaler) {
    if (pred.rows() == 0) {
        throw std::invalid_argument("mse_loss: empty batch");
    }
    if (pred.rows() != target.rows() || pred.cols() != AeroCoefficients::kOutputs ||
        target.cols() != AeroCoefficients::kOutputs) {
        throw std::invalid_argument("mse_loss: batch shape mismatch");
    }
    const Eigen::MatrixXd d = target_scaler.transform_rows(pred) - target_scaler.transform_rows(target);
    return d.squaredNorm() / (4.0 * static_cast<double>(pred.rows()));
}

// ---- objective --------------------------------------------------------------

struct Objective::Impl {
    const Physics& ph;
    Model proto;
    Batch batch;
    Eigen::MatrixXd z;
    Eigen::MatrixXd ys;
    std::vector<RotorState> rotors;
    std::vector<vlm::FixedSystem> fixed;

    Impl(const Physics& p, const Model& m, const Batch& b) : ph(p), proto(m), batch(b) {
        if (m.kind == ModelKind::LowFidelity) {
            throw std::invalid_argument("objective: the low-fidelity model has no parameters");
        }
        if (b.size() == 0 || b.y.rows() != b.x.rows()) {
            throw std::invalid_argument("objective: empty or mismatched batch");
        }
        z = m.input_scaler.transform_rows(b.x);
        ys = m.target_scaler.transform_rows(b.y);
        if (m.kind == ModelKind::PimlB) {
            const int n = b.size();
            rotors.resize(static_cast<std::size_t>(n));
            fixed.resize(static_cast<std::size_t>(n));
            std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic, 1)
            for (int i = 0; i < n; ++i) {
                try {
                    const FlightState f = state_of(b.x, i);
                    rotors[static_cast<std::size_t>(i)] = ph.rotors(f);
                    fixed[static_cast<std::size_t>(i)] = vlm::prepare_fixed(ph.lattice(), f.v, f.alpha, f.theta_elev);
                } catch (...) {
                    errors[static_cast<std::size_t>(i)] = std::current_exception();
                }
            }
            for (const auto& e : errors) {
                if (e) std::rethrow_exception(e);
            }
        }
    }

    std::array<Var, 4> piml_a_sample(const Model& m, int i, std::span<const Var> in) const {
        const FlightState f = state_of(batch.x, i);
        const TransferScaling& k = m.scaling;
        const Var v = in[0] * k.v_shift + f.v;
        const Var alpha = in[1] * k.alpha_shift + f.alpha;
        const Var elev = in[2] * k.elev_shift + f.theta_elev;
        std::array<Var, 6> induced;
        std::array<double, 6> values{};
        for (std::size_t j = 0; j < 6; ++j) {
            induced[j] = ad::softplus(in[3 + j]) * k.v_scale;
            values[j] = induced[j].value();
        }
        FlightState shifted = f;
        shifted.v = v.value();
        shifted.alpha = alpha.value();
        shifted.theta_elev = elev.value();
        const bem::WashStencil st = uniform_stencil(ph, shifted, f.theta_star, f.theta_port, values);
        std::vector<Var> va;
        std::vector<Var> vt;
        for (int d = 0; d < st.sources; ++d) {
            const auto g = static_cast<std::size_t>(ph.group(d));
            va.push_back(induced[2 * g]);
            vt.push_back(induced[2 * g + 1]);
        }
        const auto [wc, wb] = bem::apply_stencil(st, ad::concat(va), ad::concat(vt));
        return scaled(vlm::solve_on_tape(ph.lattice(), v, alpha, elev, wc, wb), m.target_scaler);
    }

    std::array<Var, 4> piml_b_sample(const Model& m, int i, std::span<const Var> in) const {
        const RotorState& rs = rotors[static_cast<std::size_t>(i)];
        const int ns = ph.stations();
        std::vector<Var> va;
        std::vector<Var> vt;
        for (std::size_t d = 0; d < rs.discs.size(); ++d) {
            const auto g = static_cast<std::size_t>(ph.group(static_cast<int>(d)));
            for (int s = 0; s < ns; ++s) {
                const std::size_t k = d * static_cast<std::size_t>(ns) + static_cast<std::size_t>(s);
                va.push_back(in[2 * g] + rs.v_a[k]);
                vt.push_back(in[2 * g + 1] + rs.v_t[k]);
            }
        }
        const auto [wc, wb] = bem::apply_stencil(rs.stencil, ad::concat(va), ad::concat(vt));
        return scaled(vlm::solve_on_tape(ph.lattice(), fixed[static_cast<std::size_t>(i)], wc, wb),
                      m.target_scaler);
    }

    double run(std::span<const double> flat, std::vector<double>* grad, Eigen::MatrixXd* pred) const {
        Model m = proto;
        m.assign(flat);
        ad::Tape t;
        const Var zv = t.variable(z);
        std::vector<nn::TapeParams> tps;
        Var p;
        switch (m.kind) {
            case ModelKind::PureAnn: {
                tps.push_back(nn::record_params(t, m.nets[0]));
                p = nn::forward(m.nets[0], tps[0], zv);
                break;
            }
            case ModelKind::PimlB: {
                tps.push_back(nn::record_params(t, m.nets[0]));
                const Var c = ad::tanh(nn::forward(m.nets[0], tps[0], zv)) * m.scaling.b_bound;
                p = batch_physics(c, [&](int i, std::span<const Var> in) { return piml_b_sample(m, i, in); });
                break;
            }
            case ModelKind::PimlA: {
                tps.push_back(nn::record_params(t, m.nets[0]));
                const Var o = nn::forward(m.nets[0], tps[0], zv);
                const Var phys = batch_physics(o, [&](int i, std::span<const Var> in) { return piml_a_sample(m, i, in); });
                const Var parts[2] = {zv, phys};
                tps.push_back(nn::record_params(t, m.nets[1]));
                p = phys + nn::forward(m.nets[1], tps[1], ad::hconcat(parts));
                break;
            }
            case ModelKind::LowFidelity:
                throw std::logic_error("unreachable");
        }
        const Var d = p - t.variable(ys);
        const Var loss = ad::sum(d * d) * (1.0 / (4.0 * static_cast<double>(batch.size())));
        if (pred) {
            *pred = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                p.values().data(), batch.size(), 4);
        }
        if (grad) {
            t.backward(loss);
            grad->clear();
            for (const auto& tp : tps) {
                const auto g = nn::gathered_gradient(t, tp);
                grad->insert(grad->end(), g.begin(), g.end());
            }
        }
        return loss.value();
    }
};

Objective::Objective(const Physics& ph, const Model& prototype, const Batch& batch)
    : impl_(std::make_unique<Impl>(ph, prototype, batch)) {}

Objective::~Objective() = default;

double Objective::loss(std::span<const double> flat) const { return impl_->run(flat, nullptr, nullptr); }

double Objective::loss_and_gradient(std::span<const double> flat, std::vector<double>& grad) const {
    return impl_->run(flat, &grad, nullptr);
}

Eigen::MatrixXd Objective::predict_scaled(std::span<const double> flat) const {
    Eigen::MatrixXd p;
    impl_->run(flat, nullptr, &p);
    return p;
}

// ---- training loop ----------------------------------------------------------

namespace {

void check_disjoint(const Batch& a, const Batch& b) {
    for (int i = 0; i < a.size(); ++i) {
        for (int j = 0; j < b.size(); ++j) {
            if (a.x.row(i) == b.x.row(j)) {
                throw std::invalid_argument(
                    fmt::format("training and validation sets overlap (train row {}, validation row {})", i, j));
            }
        }
    }
}

std::string config_echo(ModelKind kind, const TrainConfig& cfg, const Architecture& arch) {
    nlohmann::json j;
    j["kind"] = to_string(kind);
    j["max_epochs"] = cfg.max_epochs;
    j["patience"] = cfg.patience;
    j["learning_rate"] = cfg.adam.learning_rate;
    j["decay_every"] = cfg.adam.decay_every;
    j["decay_factor"] = cfg.adam.decay_factor;
    j["seed"] = cfg.seed;
    j["zero_heads"] = arch.zero_heads;
    if (!arch.induced_prior.empty()) j["induced_prior"] = arch.induced_prior;
    return j.dump();
}

}  // namespace

TrainResult train(const Physics& ph, ModelKind kind, const Batch& train_set, const Batch& val_set,
                  const TrainConfig& cfg, const Architecture& arch, const TransferScaling& scaling) {
    if (kind == ModelKind::LowFidelity) {
        throw std::invalid_argument("train: the low-fidelity model is not trainable");
    }
    if (train_set.size() == 0 || val_set.size() == 0) {
        throw std::invalid_argument("train: empty training or validation set");
    }
    check_disjoint(train_set, val_set);
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    const nn::Scaler in = nn::Scaler::fit(train_set.x);
    const nn::Scaler out = nn::Scaler::fit(train_set.y);
    Architecture a = arch;
    if (kind == ModelKind::PimlA && a.induced_prior.empty() && a.induced_prior_from_bem) {
        a.induced_prior = bem_induced_prior(ph, train_set);
    }
    const Model proto = make_model(kind, in, out, cfg.seed, a, scaling);
    const std::string echo = config_echo(kind, cfg, a);
    const Objective obj_train(ph, proto, train_set);
    const Objective obj_val(ph, proto, val_set);

    TrainResult res;
    res.model = proto;
    std::vector<double> flat = proto.flatten();
    std::vector<double> best = flat;
    std::vector<double> grad;
    nn::AdamState state(flat.size());
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;
    auto snapshot = [&] {
        Model m = proto;
        m.assign(best);
        return m;
    };

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const double lr = cfg.adam.rate_at(epoch);
        double train_loss = 0.0;
        double val_loss = 0.0;
        try {
            train_loss = obj_train.loss_and_gradient(flat, grad);
            val_loss = obj_val.loss(flat);
        } catch (const std::exception& e) {
            res.aborted = true;
            res.abort_reason = fmt::format("epoch {}: {}", epoch, e.what());
            break;
        }
        if (epoch == cfg.inject_nonfinite_at) {
            train_loss = std::numeric_limits<double>::quiet_NaN();
        }
        if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
            res.aborted = true;
            res.abort_reason = fmt::format("epoch {}: non-finite loss (train {}, validation {})", epoch, train_loss,
                                           val_loss);
            break;
        }
        const double seconds = std::chrono::duration<double>(clock::now() - t0).count();
        res.history.push_back({epoch, train_loss, val_loss, lr, seconds});
        if (cfg.on_epoch) cfg.on_epoch(epoch, train_loss, val_loss);
        if (val_loss < best_val) {
            best_val = val_loss;
            best = flat;
            res.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            res.stopped_early = true;
            break;
        }
        if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
            save_model(snapshot(), cfg.checkpoint_path, echo);
        }
        if (cfg.time_limit_seconds > 0.0 && seconds > cfg.time_limit_seconds) {
            break;
        }
        try {
            nn::adam_step(flat, grad, state, cfg.adam, lr);
        } catch (const nn::NonFiniteGradient& e) {
            res.aborted = true;
            res.abort_reason = fmt::format("epoch {}: {}", epoch, e.what());
            break;
        }
    }
    res.model = snapshot();
    if (!cfg.checkpoint_path.empty()) {
        save_model(res.model, cfg.checkpoint_path, echo);
    }
    res.seconds = std::chrono::duration<double>(clock::now() - t0).count();
    return res;
}

void write_history_csv(std::ostream& os, const std::vector<HistoryRow>& h) {
    os << "epoch,train_loss,val_loss,lr,seconds\n";
    for (const auto& r : h) {
        os << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.6f}\n", r.epoch, r.train_loss, r.val_loss, r.lr, r.seconds);
    }
}

// ---- evaluation -------------------------------------------------------------

Evaluation evaluate(const Physics& ph, const Model& m, const Batch& set, const nn::Scaler& target_scaler,
                    int timing_passes) {
    const int n = set.size();
    if (n == 0) {
        throw std::invalid_argument("evaluate: empty validation set");
    }
    Evaluation ev;
    ev.predictions.resize(n, 4);
    ev.errors.resize(n, 4);
    ev.seconds_per_sample = std::numeric_limits<double>::infinity();
    for (int pass = 0; pass < std::max(1, timing_passes); ++pass) {
        const auto t0 = std::chrono::steady_clock::now();
        for (int i = 0; i < n; ++i) {
            const auto c = predict(ph, m, state_of(set.x, i)).coefficients.as_array();
            for (int k = 0; k < 4; ++k) {
                ev.predictions(i, k) = c[static_cast<std::size_t>(k)];
            }
        }
        const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        ev.seconds_per_sample = std::min(ev.seconds_per_sample, dt / static_cast<double>(n));
    }
    ev.errors = ev.predictions - set.y;
    for (int k = 0; k < 4; ++k) {
        const double r = std::sqrt(ev.errors.col(k).squaredNorm() / n);
        ev.rmse[static_cast<std::size_t>(k)] = r;
        ev.scaled_rmse[static_cast<std::size_t>(k)] = r / target_scaler.stdev[static_cast<std::size_t>(k)];
        ev.aggregate += ev.scaled_rmse[static_cast<std::size_t>(k)] / 4.0;
    }
    return ev;
}

Eigen::MatrixXd correction_report(const Physics& ph, const Model& m, const Batch& set) {
    if (m.kind != ModelKind::PimlA && m.kind != ModelKind::PimlB) {
        throw std::invalid_argument(fmt::format("correction report needs piml_a or piml_b, got {}", to_string(m.kind)));
    }
    const int cols = m.kind == ModelKind::PimlA ? 4 : kInducedCorrections;
    Eigen::MatrixXd out(set.size(), cols);
    for (int i = 0; i < set.size(); ++i) {
        const Prediction p = predict(ph, m, state_of(set.x, i));
        for (int k = 0; k < cols; ++k) {
            out(i, k) = m.kind == ModelKind::PimlA ? p.output_correction[static_cast<std::size_t>(k)]
                                                   : p.induced_correction[static_cast<std::size_t>(k)];
        }
    }
    return out;
}

void write_correction_csv(std::ostream& os, ModelKind kind, const Batch& set, const Eigen::MatrixXd& corrections) {
    for (const char* name : kInputNames) os << name << ',';
    if (kind == ModelKind::PimlA) {
        os << "dCL,dCD,dCl,dCm\n";
    } else {
        os << "dva_star,dvt_star,dva_port,dvt_port,dva_hover,dvt_hover\n";
    }
    for (int i = 0; i < set.size(); ++i) {
        for (int c = 0; c < FlightState::kInputs; ++c) os << fmt::format("{:.17g},", set.x(i, c));
        for (int k = 0; k < corrections.cols(); ++k) {
            os << fmt::format("{:.17g}", corrections(i, k)) << (k + 1 < corrections.cols() ? ',' : '\n');
        }
    }
}

}  // namespace vtol::piml
