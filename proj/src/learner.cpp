#include "riskplan/learner.hpp"

#include "riskplan/errors.hpp"
#include "riskplan/hash.hpp"
#include "riskplan/parallel.hpp"
#include "riskplan/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

namespace riskplan {

namespace {

constexpr int kMaxIn = 31;
constexpr int kMaxHidden = 256;
constexpr int kChunk = 64; // training rows processed per blocked pass

struct Arch {
    int in = 0, h = 0, out = 0;
    int w1 = 0, b1 = 0, w2 = 0, b2 = 0, w3 = 0, b3 = 0, w4 = 0, b4 = 0, total = 0;
};

Arch arch_of(int in, int h, int out) {
    Arch a;
    a.in = in;
    a.h = h;
    a.out = out;
    a.w1 = 0;
    a.b1 = a.w1 + h * in;
    a.w2 = a.b1 + h;
    a.b2 = a.w2 + h * h;
    a.w3 = a.b2 + h;
    a.b3 = a.w3 + h * h;
    a.w4 = a.b3 + h;
    a.b4 = a.w4 + out * h;
    a.total = a.b4 + out;
    return a;
}

Arch arch_of(const MlpModel& m) { return arch_of(m.in_dim, m.hidden, m.out_dim); }

// Raw network output for one normalized input row (no gate, no residual).
void net_forward(const MlpModel& m, const double* xn, double* o) {
    const Arch a = arch_of(m);
    const double* p = m.params.data();
    double h1[kMaxHidden], h2[kMaxHidden], h3[kMaxHidden];
    for (int j = 0; j < a.h; ++j) {
        const double* w = p + a.w1 + j * a.in;
        double z = p[a.b1 + j];
        for (int i = 0; i < a.in; ++i) z += w[i] * xn[i];
        h1[j] = z > 0 ? z : 0;
    }
    for (int j = 0; j < a.h; ++j) {
        const double* w = p + a.w2 + j * a.h;
        double z = p[a.b2 + j];
        for (int k = 0; k < a.h; ++k) z += w[k] * h1[k];
        h2[j] = z > 0 ? z : 0;
    }
    for (int j = 0; j < a.h; ++j) {
        const double* w = p + a.w3 + j * a.h;
        double z = p[a.b3 + j];
        for (int k = 0; k < a.h; ++k) z += w[k] * h2[k];
        h3[j] = z > 0 ? z : 0;
    }
    for (int j = 0; j < a.out; ++j) {
        const double* w = p + a.w4 + j * a.h;
        double z = p[a.b4 + j];
        for (int k = 0; k < a.h; ++k) z += w[k] * h3[k];
        o[j] = z;
    }
}

// Denormalized prediction for one raw input row.
void forward_row(const MlpModel& m, const double* x, double* out) {
    double xn[kMaxIn + 1], o[8];
    for (int i = 0; i < m.in_dim; ++i) xn[i] = (x[i] - m.in_mean[i]) / m.in_std[i];
    net_forward(m, xn, o);
    const int d = m.out_dim - 1;
    const double tau = x[m.in_dim - 1] / m.t_max;
    for (int j = 0; j < d; ++j) out[j] = x[j] + m.res_std[j] * (tau * o[j]);
    out[d] = m.g_std * (tau * o[d]);
}

std::uint64_t hash_config(const TrainConfig& cfg, const Dataset& data) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "e=%d b=%d lr=%.17g m=%.17g ws=%.17g wd=%.17g s=%llu in=%d d=%d",
                  cfg.epochs, cfg.batch_size, cfg.lr, cfg.momentum, cfg.w_state, cfg.w_density,
                  static_cast<unsigned long long>(cfg.seed), data.in_dim, data.state_dim);
    return fnv1a64(buf, std::strlen(buf));
}

} // namespace

int MlpModel::n_params() const { return arch_of(*this).total; }

Dataset build_dataset(const DataGenConfig& gen, int n_traj, std::uint64_t seed) {
    const VehicleModel m = gen.model;
    const int d = error_dim(m), mc = control_dim(m);
    Dataset data;
    data.model = m;
    data.state_dim = d;
    data.in_dim = d + 2 * mc + 1;
    data.dt = gen.dt;
    data.t_max = gen.steps * gen.dt;

    std::vector<double> row_in(data.in_dim), traj_in, traj_tg;
    int kept = 0;
    for (int i = 0; i < n_traj; ++i) {
        Rng rng = Rng::child(seed, i);
        const Vec4 e0 = gen.init.sample_support_uniform(rng);
        const Vec4 dv = gen.dist_dist.sample_support_uniform(rng);
        const Vec4 uv = gen.uref_box.sample_support_uniform(rng);
        const ControlVec dist{dv[0], dv[1], dv[2]};
        const ControlVec u{uv[0], uv[1], uv[2]};
        const ReferenceTrajectory ref = make_reference(
            m, {0, 0, 0, 0}, std::vector<ControlVec>(gen.steps, u), gen.dt, gen.substeps);

        traj_in.clear();
        traj_tg.clear();
        try {
            AugmentedState s{{e0[0], e0[1], e0[2], e0[3]}, 0.0};
            for (int k = 0; k < gen.steps; ++k) {
                s = advance_augmented(m, s, ref, gen.cl, dist, k, 1);
                int c = 0;
                for (int j = 0; j < d; ++j) row_in[c++] = e0[j];
                for (int j = 0; j < mc; ++j) row_in[c++] = dist[j];
                for (int j = 0; j < mc; ++j) row_in[c++] = u[j];
                row_in[c] = (k + 1) * gen.dt;
                traj_in.insert(traj_in.end(), row_in.begin(), row_in.end());
                for (int j = 0; j < d; ++j) traj_tg.push_back(s.e[j]);
                traj_tg.push_back(s.log_rho);
            }
        } catch (const NonFiniteState&) {
            ++data.discarded;
            std::fprintf(stderr, "build_dataset: dropped diverged trajectory %d\n", i);
            continue;
        }
        data.inputs.insert(data.inputs.end(), traj_in.begin(), traj_in.end());
        data.targets.insert(data.targets.end(), traj_tg.begin(), traj_tg.end());
        ++kept;
    }

    // 80/20 split by trajectory, never by row
    std::vector<int> order(kept);
    for (int i = 0; i < kept; ++i) order[i] = i;
    Rng shuf(Rng::derive(seed, 0xABCDull));
    for (int i = kept - 1; i > 0; --i)
        std::swap(order[i], order[shuf.next_u64() % static_cast<std::uint64_t>(i + 1)]);
    const int n_train = kept ? std::max(1, kept * 8 / 10) : 0;
    for (int i = 0; i < kept; ++i) {
        auto& side = i < n_train ? data.train_rows : data.eval_rows;
        for (int k = 0; k < gen.steps; ++k) side.push_back(order[i] * gen.steps + k);
    }
    std::sort(data.train_rows.begin(), data.train_rows.end());
    std::sort(data.eval_rows.begin(), data.eval_rows.end());
    return data;
}

MlpModel init_model(const Dataset& data, const TrainConfig& cfg) {
    if (data.in_dim < 2 || data.in_dim > kMaxIn)
        throw ConfigError("init_model: unsupported input width");
    if (data.train_rows.empty()) throw ConfigError("init_model: empty training split");

    MlpModel m;
    m.model = data.model;
    m.in_dim = data.in_dim;
    m.out_dim = data.state_dim + 1;
    m.dt = data.dt;
    m.t_max = data.t_max;
    m.config_hash = hash_config(cfg, data);

    const int n = static_cast<int>(data.train_rows.size());
    m.in_mean.assign(m.in_dim, 0.0);
    m.in_std.assign(m.in_dim, 1.0);
    for (int i = 0; i < m.in_dim; ++i) {
        double mean = 0;
        for (int r : data.train_rows) mean += data.inputs[r * data.in_dim + i];
        mean /= n;
        double var = 0;
        for (int r : data.train_rows) {
            const double dlt = data.inputs[r * data.in_dim + i] - mean;
            var += dlt * dlt;
        }
        m.in_mean[i] = mean;
        m.in_std[i] = std::max(std::sqrt(var / n), 1e-12);
    }
    m.res_std.assign(data.state_dim, 1.0);
    for (int j = 0; j < data.state_dim; ++j) {
        double var = 0;
        for (int r : data.train_rows) {
            const double res =
                data.targets[r * m.out_dim + j] - data.inputs[r * data.in_dim + j];
            var += res * res;
        }
        m.res_std[j] = std::max(std::sqrt(var / n), 1e-8);
    }
    {
        double var = 0;
        for (int r : data.train_rows) {
            const double g = data.targets[r * m.out_dim + data.state_dim];
            var += g * g;
        }
        m.g_std = std::max(std::sqrt(var / n), 1e-8);
    }

    const Arch a = arch_of(m);
    m.params.assign(a.total, 0.0);
    Rng rng(cfg.seed);
    auto he_fill = [&](int off, int rows, int cols) {
        const double s = std::sqrt(2.0 / cols);
        for (int i = 0; i < rows * cols; ++i) m.params[off + i] = s * rng.normal();
    };
    he_fill(a.w1, a.h, a.in);
    he_fill(a.w2, a.h, a.h);
    he_fill(a.w3, a.h, a.h);
    he_fill(a.w4, a.out, a.h);
    return m;
}

double loss_and_grad(const MlpModel& m, const Dataset& data, const std::vector<int>& rows,
                     const TrainConfig& cfg, std::vector<double>* grad) {
    const Arch a = arch_of(m);
    const int D = m.out_dim - 1;
    const int n = static_cast<int>(rows.size());
    if (n == 0) throw ConfigError("loss_and_grad: no rows");
    if (grad) grad->assign(a.total, 0.0);
    const double* p = m.params.data();
    double* g = grad ? grad->data() : nullptr;

    double coeff[8];
    for (int j = 0; j < D; ++j) coeff[j] = cfg.w_state / D;
    coeff[D] = cfg.w_density;

    std::vector<double> xn(kChunk * a.in), tau(kChunk), y(kChunk * a.out), o(kChunk * a.out);
    std::vector<double> h1(kChunk * a.h), h2(kChunk * a.h), h3(kChunk * a.h);
    std::vector<double> dza(kChunk * a.h), dzb(kChunk * a.h), dO(kChunk * a.out);

    double loss_sum = 0;
    for (int base = 0; base < n; base += kChunk) {
        const int c = std::min(kChunk, n - base);
        for (int b = 0; b < c; ++b) {
            const double* x = &data.inputs[static_cast<size_t>(rows[base + b]) * a.in];
            const double* t = &data.targets[static_cast<size_t>(rows[base + b]) * a.out];
            for (int i = 0; i < a.in; ++i) xn[b * a.in + i] = (x[i] - m.in_mean[i]) / m.in_std[i];
            tau[b] = x[a.in - 1] / m.t_max;
            for (int j = 0; j < D; ++j) y[b * a.out + j] = (t[j] - x[j]) / m.res_std[j];
            y[b * a.out + D] = t[D] / m.g_std;
        }
        // forward, weight rows reused across the chunk
        for (int j = 0; j < a.h; ++j) {
            const double* w = p + a.w1 + j * a.in;
            const double bj = p[a.b1 + j];
            for (int b = 0; b < c; ++b) {
                double z = bj;
                const double* xb = &xn[b * a.in];
                for (int i = 0; i < a.in; ++i) z += w[i] * xb[i];
                h1[b * a.h + j] = z > 0 ? z : 0;
            }
        }
        for (int j = 0; j < a.h; ++j) {
            const double* w = p + a.w2 + j * a.h;
            const double bj = p[a.b2 + j];
            for (int b = 0; b < c; ++b) {
                double z = bj;
                const double* hb = &h1[b * a.h];
                for (int k = 0; k < a.h; ++k) z += w[k] * hb[k];
                h2[b * a.h + j] = z > 0 ? z : 0;
            }
        }
        for (int j = 0; j < a.h; ++j) {
            const double* w = p + a.w3 + j * a.h;
            const double bj = p[a.b3 + j];
            for (int b = 0; b < c; ++b) {
                double z = bj;
                const double* hb = &h2[b * a.h];
                for (int k = 0; k < a.h; ++k) z += w[k] * hb[k];
                h3[b * a.h + j] = z > 0 ? z : 0;
            }
        }
        for (int j = 0; j < a.out; ++j) {
            const double* w = p + a.w4 + j * a.h;
            const double bj = p[a.b4 + j];
            for (int b = 0; b < c; ++b) {
                double z = bj;
                const double* hb = &h3[b * a.h];
                for (int k = 0; k < a.h; ++k) z += w[k] * hb[k];
                o[b * a.out + j] = z;
            }
        }
        for (int b = 0; b < c; ++b)
            for (int j = 0; j < a.out; ++j) {
                const double diff = tau[b] * o[b * a.out + j] - y[b * a.out + j];
                loss_sum += coeff[j] * diff * diff;
                if (g) dO[b * a.out + j] = 2.0 * coeff[j] * diff * tau[b];
            }
        if (!g) continue;

        // head
        for (int j = 0; j < a.out; ++j) {
            double* gw = g + a.w4 + j * a.h;
            double gb = 0;
            for (int b = 0; b < c; ++b) {
                const double dj = dO[b * a.out + j];
                if (dj == 0) continue;
                const double* hb = &h3[b * a.h];
                for (int k = 0; k < a.h; ++k) gw[k] += dj * hb[k];
                gb += dj;
            }
            g[a.b4 + j] += gb;
        }
        std::fill(dza.begin(), dza.begin() + c * a.h, 0.0);
        for (int j = 0; j < a.out; ++j) {
            const double* w = p + a.w4 + j * a.h;
            for (int b = 0; b < c; ++b) {
                const double dj = dO[b * a.out + j];
                if (dj == 0) continue;
                double* db = &dza[b * a.h];
                for (int k = 0; k < a.h; ++k) db[k] += dj * w[k];
            }
        }
        for (int i = 0; i < c * a.h; ++i)
            if (h3[i] <= 0) dza[i] = 0;

        // layer 3
        for (int j = 0; j < a.h; ++j) {
            double* gw = g + a.w3 + j * a.h;
            double gb = 0;
            for (int b = 0; b < c; ++b) {
                const double dj = dza[b * a.h + j];
                if (dj == 0) continue;
                const double* hb = &h2[b * a.h];
                for (int k = 0; k < a.h; ++k) gw[k] += dj * hb[k];
                gb += dj;
            }
            g[a.b3 + j] += gb;
        }
        std::fill(dzb.begin(), dzb.begin() + c * a.h, 0.0);
        for (int j = 0; j < a.h; ++j) {
            const double* w = p + a.w3 + j * a.h;
            for (int b = 0; b < c; ++b) {
                const double dj = dza[b * a.h + j];
                if (dj == 0) continue;
                double* db = &dzb[b * a.h];
                for (int k = 0; k < a.h; ++k) db[k] += dj * w[k];
            }
        }
        for (int i = 0; i < c * a.h; ++i)
            if (h2[i] <= 0) dzb[i] = 0;

        // layer 2
        for (int j = 0; j < a.h; ++j) {
            double* gw = g + a.w2 + j * a.h;
            double gb = 0;
            for (int b = 0; b < c; ++b) {
                const double dj = dzb[b * a.h + j];
                if (dj == 0) continue;
                const double* hb = &h1[b * a.h];
                for (int k = 0; k < a.h; ++k) gw[k] += dj * hb[k];
                gb += dj;
            }
            g[a.b2 + j] += gb;
        }
        std::fill(dza.begin(), dza.begin() + c * a.h, 0.0);
        for (int j = 0; j < a.h; ++j) {
            const double* w = p + a.w2 + j * a.h;
            for (int b = 0; b < c; ++b) {
                const double dj = dzb[b * a.h + j];
                if (dj == 0) continue;
                double* db = &dza[b * a.h];
                for (int k = 0; k < a.h; ++k) db[k] += dj * w[k];
            }
        }
        for (int i = 0; i < c * a.h; ++i)
            if (h1[i] <= 0) dza[i] = 0;

        // layer 1
        for (int j = 0; j < a.h; ++j) {
            double* gw = g + a.w1 + j * a.in;
            double gb = 0;
            for (int b = 0; b < c; ++b) {
                const double dj = dza[b * a.h + j];
                if (dj == 0) continue;
                const double* xb = &xn[b * a.in];
                for (int i = 0; i < a.in; ++i) gw[i] += dj * xb[i];
                gb += dj;
            }
            g[a.b1 + j] += gb;
        }
    }

    if (g)
        for (int i = 0; i < a.total; ++i) g[i] /= n;
    return loss_sum / n;
}

TrainResult train(const Dataset& data, const TrainConfig& cfg) {
    if (data.train_rows.empty()) throw ConfigError("train: empty training split");
    if (cfg.epochs <= 0 || cfg.batch_size <= 0 || cfg.lr <= 0)
        throw ConfigError("train: hyperparameters must be positive");

    TrainResult res;
    res.model = init_model(data, cfg);
    MlpModel& m = res.model;
    const int total = m.n_params();
    std::vector<double> vel(total, 0.0), grad;
    std::vector<int> perm = data.train_rows, batch;

    Rng shuf(Rng::derive(cfg.seed, 0x51ull));
    const int decay1 = static_cast<int>(std::ceil(0.6 * cfg.epochs));
    const int decay2 = static_cast<int>(std::ceil(0.8 * cfg.epochs));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.lr * (epoch >= decay2 ? 0.01 : epoch >= decay1 ? 0.1 : 1.0);
        for (int i = static_cast<int>(perm.size()) - 1; i > 0; --i)
            std::swap(perm[i], perm[shuf.next_u64() % static_cast<std::uint64_t>(i + 1)]);
        for (size_t base = 0; base < perm.size(); base += cfg.batch_size) {
            const size_t end = std::min(perm.size(), base + cfg.batch_size);
            batch.assign(perm.begin() + base, perm.begin() + end);
            const double l = loss_and_grad(m, data, batch, cfg, &grad);
            if (!std::isfinite(l))
                throw DivergedTraining("train: batch loss left the reals (lower the rate)");
            for (int i = 0; i < total; ++i) {
                vel[i] = cfg.momentum * vel[i] - lr * grad[i];
                m.params[i] += vel[i];
            }
        }
        const double full = loss_and_grad(m, data, data.train_rows, cfg, nullptr);
        if (!std::isfinite(full))
            throw DivergedTraining("train: epoch loss left the reals (lower the rate)");
        res.epoch_train_loss.push_back(full);
    }
    res.train_loss = res.epoch_train_loss.back();
    res.eval_loss =
        data.eval_rows.empty() ? 0.0 : loss_and_grad(m, data, data.eval_rows, cfg, nullptr);
    return res;
}

void predict_rows(const MlpModel& m, const double* inputs, int n_rows, double* out) {
    parallel_for(n_rows, [&](std::int64_t r) {
        forward_row(m, inputs + r * m.in_dim, out + r * m.out_dim);
    });
}

void predict_rows_serial(const MlpModel& m, const double* inputs, int n_rows, double* out) {
    serial_for(n_rows, [&](std::int64_t r) {
        forward_row(m, inputs + r * m.in_dim, out + r * m.out_dim);
    });
}

std::pair<ErrorVec, double> predict(const MlpModel& m, const ErrorVec& e0, const ControlVec& dist,
                                    const ControlVec& u_ref, double t) {
    const int d = state_dim(m.model), mc = control_dim(m.model);
    if (m.in_dim != d + 2 * mc + 1) throw ConfigError("predict: unexpected input layout");
    if (t < 0 || t > m.t_max * (1 + 1e-9))
        throw HorizonExceeded("predict: t outside the trained horizon");
    double x[kMaxIn + 1], o[8];
    int c = 0;
    for (int j = 0; j < d; ++j) x[c++] = e0[j];
    for (int j = 0; j < mc; ++j) x[c++] = dist[j];
    for (int j = 0; j < mc; ++j) x[c++] = u_ref[j];
    x[c] = t;
    forward_row(m, x, o);
    ErrorVec e{};
    for (int j = 0; j < d; ++j) e[j] = o[j];
    return {e, o[d]};
}

void save_model(const MlpModel& m, const std::string& path) {
    nlohmann::json hdr;
    hdr["schema"] = 1;
    hdr["vehicle"] = m.model == VehicleModel::Car ? "car" : "hovercraft";
    hdr["in_dim"] = m.in_dim;
    hdr["hidden"] = m.hidden;
    hdr["out_dim"] = m.out_dim;
    hdr["dt"] = m.dt;
    hdr["t_max"] = m.t_max;
    hdr["in_mean"] = m.in_mean;
    hdr["in_std"] = m.in_std;
    hdr["res_std"] = m.res_std;
    hdr["g_std"] = m.g_std;
    char hash[32];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(m.config_hash));
    hdr["config_hash"] = hash;
    const std::string header = hdr.dump();

    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw ConfigError("save_model: cannot open " + tmp);
        f.write("RPMLP1\n", 7);
        const std::uint32_t hlen = static_cast<std::uint32_t>(header.size());
        f.write(reinterpret_cast<const char*>(&hlen), 4);
        f.write(header.data(), header.size());
        const std::uint64_t np = static_cast<std::uint64_t>(m.params.size());
        f.write(reinterpret_cast<const char*>(&np), 8);
        f.write(reinterpret_cast<const char*>(m.params.data()), m.params.size() * 8);
        if (!f) throw ConfigError("save_model: short write to " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw ConfigError("save_model: cannot move " + tmp + " into place");
}

MlpModel load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("load_model: cannot open " + path);
    std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (blob.size() < 11 || blob.compare(0, 7, "RPMLP1\n") != 0)
        throw ConfigError("load_model: not a model file: " + path);
    std::uint32_t hlen = 0;
    std::memcpy(&hlen, blob.data() + 7, 4);
    if (blob.size() < 11 + static_cast<size_t>(hlen) + 8)
        throw ConfigError("load_model: truncated header in " + path);

    MlpModel m;
    try {
        const nlohmann::json hdr = nlohmann::json::parse(blob.substr(11, hlen));
        if (hdr.at("schema").get<int>() != 1)
            throw ConfigError("load_model: unsupported schema in " + path);
        const std::string vehicle = hdr.at("vehicle").get<std::string>();
        m.model = vehicle == "car" ? VehicleModel::Car : VehicleModel::Hovercraft;
        m.in_dim = hdr.at("in_dim").get<int>();
        m.hidden = hdr.at("hidden").get<int>();
        m.out_dim = hdr.at("out_dim").get<int>();
        m.dt = hdr.at("dt").get<double>();
        m.t_max = hdr.at("t_max").get<double>();
        m.in_mean = hdr.at("in_mean").get<std::vector<double>>();
        m.in_std = hdr.at("in_std").get<std::vector<double>>();
        m.res_std = hdr.at("res_std").get<std::vector<double>>();
        m.g_std = hdr.at("g_std").get<double>();
        m.config_hash = std::stoull(hdr.at("config_hash").get<std::string>(), nullptr, 16);
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("load_model: bad header: ") + e.what());
    }
    if (m.in_dim < 2 || m.in_dim > kMaxIn || m.hidden < 1 || m.hidden > kMaxHidden ||
        m.out_dim < 2 || m.out_dim > 8 ||
        static_cast<int>(m.in_mean.size()) != m.in_dim ||
        static_cast<int>(m.in_std.size()) != m.in_dim ||
        static_cast<int>(m.res_std.size()) != m.out_dim - 1)
        throw ConfigError("load_model: inconsistent dimensions in " + path);

    std::uint64_t np = 0;
    std::memcpy(&np, blob.data() + 11 + hlen, 8);
    const Arch a = arch_of(m);
    if (np != static_cast<std::uint64_t>(a.total) ||
        blob.size() != 11 + static_cast<size_t>(hlen) + 8 + np * 8)
        throw ConfigError("load_model: parameter block size mismatch in " + path);
    m.params.resize(np);
    std::memcpy(m.params.data(), blob.data() + 11 + hlen + 8, np * 8);
    for (double v : m.params)
        if (!std::isfinite(v)) throw ConfigError("load_model: non-finite weight in " + path);
    return m;
}

namespace {

class ModelPropagation : public Propagation {
public:
    ModelPropagation(const MlpModel& net, const ReferenceTrajectory& ref,
                     std::vector<ErrorVec> e0, std::vector<ControlVec> dist)
        : net_(net), ref_(ref), dist_(std::move(dist)), anchor_e_(std::move(e0)) {
        n_ = static_cast<int>(anchor_e_.size());
        if (static_cast<int>(dist_.size()) != n_)
            throw ConfigError("model propagation: one disturbance per sample required");
        const int d = state_dim(net_.model), mc = control_dim(net_.model);
        if (net_.in_dim != d + 2 * mc + 1)
            throw ConfigError("model propagation: unexpected input layout");
        if (ref_.model != net_.model) throw ConfigError("model propagation: vehicle mismatch");
        if (net_.t_max + 1e-9 < ref_.dt)
            throw ConfigError("model propagation: trained horizon shorter than one step");
        anchor_g_.assign(n_, 0.0);
        cur_e_ = anchor_e_;
        cur_g_ = anchor_g_;
    }

    void advance(int steps) override {
        for (int s = 0; s < steps; ++s) {
            if (step_ >= ref_.steps())
                throw HorizonExceeded("model propagation: past the reference end");
            const bool control_change = ref_.controls[step_] != ref_.controls[anchor_step_];
            const bool horizon_out =
                (step_ + 1 - anchor_step_) * ref_.dt > net_.t_max + 1e-9;
            if (step_ > anchor_step_ && (control_change || horizon_out)) {
                anchor_e_ = cur_e_;
                anchor_g_ = cur_g_;
                anchor_step_ = step_;
            }
            ++step_;
            materialize();
        }
    }

    int step() const override { return step_; }
    const std::vector<ErrorVec>& errors() const override { return cur_e_; }
    const std::vector<double>& log_ratios() const override { return cur_g_; }

private:
    void materialize() {
        if (step_ == anchor_step_) {
            cur_e_ = anchor_e_;
            cur_g_ = anchor_g_;
            return;
        }
        const int d = state_dim(net_.model), mc = control_dim(net_.model);
        const ControlVec& u = ref_.controls[anchor_step_];
        const double t = (step_ - anchor_step_) * ref_.dt;
        std::vector<double> in(static_cast<size_t>(n_) * net_.in_dim);
        std::vector<double> out(static_cast<size_t>(n_) * net_.out_dim);
        for (int i = 0; i < n_; ++i) {
            double* x = &in[static_cast<size_t>(i) * net_.in_dim];
            int c = 0;
            for (int j = 0; j < d; ++j) x[c++] = anchor_e_[i][j];
            for (int j = 0; j < mc; ++j) x[c++] = dist_[i][j];
            for (int j = 0; j < mc; ++j) x[c++] = u[j];
            x[c] = t;
        }
        predict_rows(net_, in.data(), n_, out.data());
        for (int i = 0; i < n_; ++i) {
            const double* o = &out[static_cast<size_t>(i) * net_.out_dim];
            ErrorVec e{};
            for (int j = 0; j < d; ++j) e[j] = o[j];
            cur_e_[i] = e;
            cur_g_[i] = anchor_g_[i] + o[d];
        }
    }

    MlpModel net_; // copied so the propagation may outlive its predictor
    ReferenceTrajectory ref_;
    std::vector<ControlVec> dist_;
    std::vector<ErrorVec> anchor_e_, cur_e_;
    std::vector<double> anchor_g_, cur_g_;
    int n_ = 0, step_ = 0, anchor_step_ = 0;
};

} // namespace

std::unique_ptr<Propagation> ModelPredictor::propagate(const ReferenceTrajectory& ref,
                                                       std::vector<ErrorVec> e0,
                                                       std::vector<ControlVec> dist) const {
    return std::make_unique<ModelPropagation>(net_, ref, std::move(e0), std::move(dist));
}

} // namespace riskplan
