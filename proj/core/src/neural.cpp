#include "telab/neural.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "telab/errors.hpp"
#include "telab/rng.hpp"

namespace telab {

namespace {

constexpr int kHiddenWidth = 128;
constexpr int kHiddenLayers = 5;
constexpr double kGroupSumFloor = 1e-12;

Mlp init_mlp_from_stream(int h, int num_nodes, const PathSets& ps,
                         double gamma, Rng& rng) {
  if (h < 1) {
    throw ConfigError("window length H must be >= 1");
  }
  Mlp m;
  m.h = h;
  m.num_nodes = num_nodes;
  m.gamma = gamma;
  m.input_scale = 1.0;
  std::vector<int> dims;
  dims.push_back(h * num_nodes * (num_nodes - 1));
  for (int i = 0; i < kHiddenLayers; ++i) {
    dims.push_back(kHiddenWidth);
  }
  dims.push_back(static_cast<int>(ps.total_paths()));
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const int fan_in = dims[l];
    const int fan_out = dims[l + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd w(fan_in, fan_out);
    for (int i = 0; i < fan_in; ++i) {
      for (int j = 0; j < fan_out; ++j) {
        w(i, j) = (2.0 * rng.uniform() - 1.0) * limit;
      }
    }
    m.weights.push_back(std::move(w));
    m.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return m;
}

struct ForwardCache {
  Eigen::MatrixXd x;                  // batch x input
  std::vector<Eigen::MatrixXd> z;     // pre-activations per layer
  std::vector<Eigen::MatrixXd> a;     // post-activations (last = sigmoid)
  Eigen::MatrixXd ratios;             // batch x paths, group-normalized
  Eigen::MatrixXd group_sum;          // batch x groups
};

void forward_batch(const Mlp& m, const PathSets& ps, const Eigen::MatrixXd& x,
                   ForwardCache& cache) {
  const std::size_t layers = m.weights.size();
  cache.x = x;
  cache.z.assign(layers, {});
  cache.a.assign(layers, {});
  const Eigen::MatrixXd* in = &cache.x;
  for (std::size_t l = 0; l < layers; ++l) {
    cache.z[l] = (*in * m.weights[l]).rowwise() + m.biases[l].transpose();
    if (l + 1 < layers) {
      cache.a[l] = cache.z[l].cwiseMax(0.0);
    } else {
      cache.a[l] = 1.0 / (1.0 + (-cache.z[l].array()).exp());
    }
    in = &cache.a[l];
  }
  const Eigen::MatrixXd& s = cache.a.back();
  cache.ratios.resize(s.rows(), s.cols());
  cache.group_sum.resize(s.rows(), static_cast<Eigen::Index>(ps.sd_count()));
  for (Eigen::Index row = 0; row < s.rows(); ++row) {
    for (std::size_t sd = 0; sd < ps.sd_count(); ++sd) {
      const std::size_t lo = ps.group_offset(sd);
      const std::size_t size = ps.group_size(sd);
      double sum = 0.0;
      for (std::size_t p = lo; p < lo + size; ++p) {
        sum += s(row, static_cast<Eigen::Index>(p));
      }
      cache.group_sum(row, static_cast<Eigen::Index>(sd)) = sum;
      if (sum < kGroupSumFloor) {
        const double r = 1.0 / static_cast<double>(size);
        for (std::size_t p = lo; p < lo + size; ++p) {
          cache.ratios(row, static_cast<Eigen::Index>(p)) = r;
        }
      } else {
        for (std::size_t p = lo; p < lo + size; ++p) {
          cache.ratios(row, static_cast<Eigen::Index>(p)) =
              s(row, static_cast<Eigen::Index>(p)) / sum;
        }
      }
    }
  }
}

// Gradients w.r.t. parameters from per-sample dL/dratios, averaged over the
// batch. Chain: group normalization -> sigmoid -> linear stack.
Gradients backward_batch(const Mlp& m, const PathSets& ps,
                         const ForwardCache& cache,
                         const Eigen::MatrixXd& dl_dratios) {
  const std::size_t layers = m.weights.size();
  const Eigen::Index batch = cache.x.rows();
  const Eigen::MatrixXd& s = cache.a.back();

  Eigen::MatrixXd dl_ds(s.rows(), s.cols());
  for (Eigen::Index row = 0; row < s.rows(); ++row) {
    for (std::size_t sd = 0; sd < ps.sd_count(); ++sd) {
      const std::size_t lo = ps.group_offset(sd);
      const std::size_t size = ps.group_size(sd);
      const double sum = cache.group_sum(row, static_cast<Eigen::Index>(sd));
      if (sum < kGroupSumFloor) {
        // Uniform fallback is locally constant in s.
        for (std::size_t p = lo; p < lo + size; ++p) {
          dl_ds(row, static_cast<Eigen::Index>(p)) = 0.0;
        }
        continue;
      }
      double weighted = 0.0;
      for (std::size_t p = lo; p < lo + size; ++p) {
        weighted += dl_dratios(row, static_cast<Eigen::Index>(p)) *
                    cache.ratios(row, static_cast<Eigen::Index>(p));
      }
      for (std::size_t p = lo; p < lo + size; ++p) {
        dl_ds(row, static_cast<Eigen::Index>(p)) =
            (dl_dratios(row, static_cast<Eigen::Index>(p)) - weighted) / sum;
      }
    }
  }

  Gradients g;
  g.weights.resize(layers);
  g.biases.resize(layers);
  const double inv_batch = 1.0 / static_cast<double>(batch);
  Eigen::MatrixXd delta =
      dl_ds.array() * (s.array() * (1.0 - s.array()));
  for (std::size_t l = layers; l-- > 0;) {
    const Eigen::MatrixXd& input = l == 0 ? cache.x : cache.a[l - 1];
    g.weights[l] = input.transpose() * delta * inv_batch;
    g.biases[l] = delta.colwise().sum().transpose() * inv_batch;
    if (l > 0) {
      delta = (delta * m.weights[l].transpose()).array() *
              (cache.z[l - 1].array() > 0.0).cast<double>();
    }
  }
  return g;
}

// Loss value and dL/dratios for one sample. Both max terms use their
// argmax only, lowest index on ties.
double loss_grad_ratios(const std::vector<double>& ratios,
                        const DemandMatrix& dm, const Incidence& inc,
                        const PathSets& ps,
                        const std::vector<double>& variance_weights,
                        double gamma, std::vector<double>* dl_dratios) {
  TEConfig config;
  config.ratios = ratios;
  const LinkLoad load = evaluate(config, dm, inc);
  if (dl_dratios != nullptr) {
    dl_dratios->assign(ratios.size(), 0.0);
    if (load.argmax >= 0 && load.mlu > 0.0) {
      const double cap = inc.capacities[load.argmax];
      for (std::size_t p = 0; p < inc.path_count(); ++p) {
        for (int c : inc.constraints_of_path(p)) {
          if (c == load.argmax) {
            const SdPair& pair = inc.sd_pairs[inc.path_sd[p]];
            (*dl_dratios)[p] += dm.at(pair.src, pair.dst) / cap;
            break;
          }
        }
      }
    }
  }
  double total = load.mlu;
  if (gamma != 0.0) {
    for (std::size_t sd = 0; sd < ps.sd_count(); ++sd) {
      const double w = variance_weights[sd];
      if (w == 0.0) {
        continue;
      }
      const std::size_t lo = ps.group_offset(sd);
      const std::size_t size = ps.group_size(sd);
      double best = -1.0;
      std::size_t best_p = lo;
      for (std::size_t p = lo; p < lo + size; ++p) {
        const double sens = ratios[p] / ps.path(p).capacity;
        if (sens > best) {
          best = sens;
          best_p = p;
        }
      }
      total += gamma * w * best;
      if (dl_dratios != nullptr) {
        (*dl_dratios)[best_p] += gamma * w / ps.path(best_p).capacity;
      }
    }
  }
  return total;
}

std::vector<double> normalized_variance_weights(const TrafficStats& stats,
                                                const PathSets& ps) {
  std::vector<double> w = stats.variances_for(ps.sd_pairs());
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (total <= 0.0) {
    std::fill(w.begin(), w.end(), 0.0);
    return w;
  }
  for (double& v : w) {
    v /= total;
  }
  return w;
}

Eigen::RowVectorXd flatten_window(const Mlp& m,
                                  std::span<const DemandMatrix> window) {
  if (static_cast<int>(window.size()) != m.h) {
    throw DataError("window length does not match model H");
  }
  Eigen::RowVectorXd x(m.input_dim());
  Eigen::Index at = 0;
  for (const DemandMatrix& dm : window) {
    if (dm.nodes() != m.num_nodes) {
      throw DataError("window node count does not match model");
    }
    for (int i = 0; i < m.num_nodes; ++i) {
      for (int j = 0; j < m.num_nodes; ++j) {
        if (i != j) {
          x(at++) = dm.at(i, j) / m.input_scale;
        }
      }
    }
  }
  return x;
}

}  // namespace

Mlp init_mlp(int h, int num_nodes, const PathSets& ps, double gamma,
             std::uint64_t seed) {
  Rng rng(seed);
  return init_mlp_from_stream(h, num_nodes, ps, gamma, rng);
}

void validate_model(const Mlp& m, const PathSets& ps) {
  if (m.weights.empty() || m.weights.size() != m.biases.size()) {
    throw DataError("model has no layers");
  }
  if (m.num_nodes != ps.node_count()) {
    throw DataError("model node count does not match path sets");
  }
  if (m.output_dim() != static_cast<int>(ps.total_paths())) {
    throw DataError("model output dimension " + std::to_string(m.output_dim()) +
                    " does not match path count " +
                    std::to_string(ps.total_paths()));
  }
}

TEConfig forward(const Mlp& m, const PathSets& ps,
                 std::span<const DemandMatrix> window) {
  validate_model(m, ps);
  ForwardCache cache;
  forward_batch(m, ps, flatten_window(m, window), cache);
  TEConfig config;
  config.ratios.assign(cache.ratios.data(),
                       cache.ratios.data() + cache.ratios.cols());
  return config;
}

double loss(const TEConfig& config, const DemandMatrix& dm,
            const TrafficStats& stats, double gamma, const Incidence& inc,
            const PathSets& ps) {
  const auto weights = normalized_variance_weights(stats, ps);
  return loss_grad_ratios(config.ratios, dm, inc, ps, weights, gamma, nullptr);
}

Gradients backward(const Mlp& m, const PathSets& ps, const Incidence& inc,
                   std::span<const DemandMatrix> window, const DemandMatrix& dm,
                   const std::vector<double>& variance_weights, double gamma) {
  validate_model(m, ps);
  ForwardCache cache;
  forward_batch(m, ps, flatten_window(m, window), cache);
  std::vector<double> ratios(cache.ratios.data(),
                             cache.ratios.data() + cache.ratios.cols());
  std::vector<double> dl_dratios;
  loss_grad_ratios(ratios, dm, inc, ps, variance_weights, gamma, &dl_dratios);
  Eigen::MatrixXd dl(1, static_cast<Eigen::Index>(dl_dratios.size()));
  for (std::size_t i = 0; i < dl_dratios.size(); ++i) {
    dl(0, static_cast<Eigen::Index>(i)) = dl_dratios[i];
  }
  return backward_batch(m, ps, cache, dl);
}

AdamState init_adam(const Mlp& m, double lr) {
  AdamState s;
  s.lr = lr;
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    s.m_w.push_back(Eigen::MatrixXd::Zero(m.weights[l].rows(),
                                          m.weights[l].cols()));
    s.v_w.push_back(Eigen::MatrixXd::Zero(m.weights[l].rows(),
                                          m.weights[l].cols()));
    s.m_b.push_back(Eigen::VectorXd::Zero(m.biases[l].size()));
    s.v_b.push_back(Eigen::VectorXd::Zero(m.biases[l].size()));
  }
  return s;
}

void adam_step(Mlp& model, AdamState& s, const Gradients& g) {
  ++s.step;
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    s.m_w[l] = s.beta1 * s.m_w[l] + (1.0 - s.beta1) * g.weights[l];
    s.v_w[l].array() = s.beta2 * s.v_w[l].array() +
                       (1.0 - s.beta2) * g.weights[l].array().square();
    model.weights[l].array() -=
        s.lr * (s.m_w[l].array() / bc1) /
        ((s.v_w[l].array() / bc2).sqrt() + s.eps);
    s.m_b[l] = s.beta1 * s.m_b[l] + (1.0 - s.beta1) * g.biases[l];
    s.v_b[l].array() = s.beta2 * s.v_b[l].array() +
                       (1.0 - s.beta2) * g.biases[l].array().square();
    model.biases[l].array() -=
        s.lr * (s.m_b[l].array() / bc1) /
        ((s.v_b[l].array() / bc2).sqrt() + s.eps);
  }
}

TrainResult train(const TrafficTrace& trace, const PathSets& ps,
                  const Incidence& inc, const TrainOptions& opts) {
  const std::size_t n = trace.size();
  if (!(opts.split > 0.0 && opts.split < 1.0)) {
    throw ConfigError("split must lie in (0,1)");
  }
  const std::size_t train_end =
      static_cast<std::size_t>(opts.split * static_cast<double>(n));
  const std::size_t h = static_cast<std::size_t>(opts.h);
  if (n <= h + 2 || train_end <= h + 1) {
    throw DataError("insufficient data: need more than H + 2 snapshots");
  }
  if (trace.nodes() != ps.node_count()) {
    throw DataError("trace node count does not match path sets");
  }

  const TrafficStats stats = compute_stats(trace, 0, train_end);
  const auto variance_weights = normalized_variance_weights(stats, ps);

  double input_scale = 0.0;
  for (std::size_t t = 0; t < train_end; ++t) {
    input_scale = std::max(input_scale, trace.snapshots[t].max_entry());
  }
  if (input_scale <= 0.0) {
    input_scale = 1.0;
  }

  Rng rng(opts.seed);
  Mlp model = init_mlp_from_stream(opts.h, trace.nodes(), ps, opts.gamma, rng);
  model.input_scale = input_scale;
  AdamState adam = init_adam(model, opts.lr);

  // Flattened snapshots, reused across epochs.
  std::vector<std::vector<double>> flat(train_end);
  for (std::size_t t = 0; t < train_end; ++t) {
    flat[t] = trace.snapshots[t].off_diagonal();
  }

  std::vector<std::size_t> samples;  // target snapshot ids
  for (std::size_t t = h; t < train_end; ++t) {
    samples.push_back(t);
  }
  const std::size_t batch_size = std::max(1, opts.batch);

  TrainResult result;
  ForwardCache cache;
  std::vector<double> ratios_row;
  std::vector<double> dl_row;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    rng.shuffle(samples);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < samples.size(); start += batch_size) {
      const std::size_t b =
          std::min(batch_size, samples.size() - start);
      Eigen::MatrixXd x(b, model.input_dim());
      for (std::size_t row = 0; row < b; ++row) {
        const std::size_t t = samples[start + row];
        Eigen::Index at = 0;
        for (std::size_t w = t - h; w < t; ++w) {
          for (double v : flat[w]) {
            x(static_cast<Eigen::Index>(row), at++) = v / input_scale;
          }
        }
      }
      forward_batch(model, ps, x, cache);
      Eigen::MatrixXd dl(b, cache.ratios.cols());
      double batch_loss = 0.0;
      for (std::size_t row = 0; row < b; ++row) {
        ratios_row.assign(cache.ratios.cols(), 0.0);
        for (Eigen::Index p = 0; p < cache.ratios.cols(); ++p) {
          ratios_row[p] = cache.ratios(static_cast<Eigen::Index>(row), p);
        }
        batch_loss += loss_grad_ratios(
            ratios_row, trace.snapshots[samples[start + row]], inc, ps,
            variance_weights, opts.gamma, &dl_row);
        for (Eigen::Index p = 0; p < dl.cols(); ++p) {
          dl(static_cast<Eigen::Index>(row), p) = dl_row[p];
        }
      }
      batch_loss /= static_cast<double>(b);
      const Gradients grads = backward_batch(model, ps, cache, dl);
      adam_step(model, adam, grads);
      epoch_loss += batch_loss;
      ++batches;
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(batches));
  }
  result.model = std::move(model);
  result.train_end = train_end;
  return result;
}

void save_model(const Mlp& m, const std::string& path) {
  nlohmann::json j;
  j["version"] = 1;
  j["h"] = m.h;
  j["num_nodes"] = m.num_nodes;
  j["num_paths"] = m.output_dim();
  j["input_scale"] = m.input_scale;
  j["gamma"] = m.gamma;
  auto layers = nlohmann::json::array();
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    nlohmann::json layer;
    auto w = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.weights[l].rows(); ++i) {
      auto row = nlohmann::json::array();
      for (Eigen::Index k = 0; k < m.weights[l].cols(); ++k) {
        row.push_back(m.weights[l](i, k));
      }
      w.push_back(std::move(row));
    }
    layer["w"] = std::move(w);
    auto b = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.biases[l].size(); ++i) {
      b.push_back(m.biases[l](i));
    }
    layer["b"] = std::move(b);
    layers.push_back(std::move(layer));
  }
  j["layers"] = std::move(layers);
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write model file: " + path);
  }
  out << j.dump() << "\n";
}

Mlp load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open model file: " + path);
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("model parse error in " + path + ": " + e.what());
  }
  try {
    if (j.at("version").get<int>() != 1) {
      throw DataError("unsupported model version in " + path);
    }
    Mlp m;
    m.h = j.at("h").get<int>();
    m.num_nodes = j.at("num_nodes").get<int>();
    m.input_scale = j.at("input_scale").get<double>();
    m.gamma = j.at("gamma").get<double>();
    const int num_paths = j.at("num_paths").get<int>();
    if (m.h < 1 || m.num_nodes < 2 || !(m.input_scale > 0.0)) {
      throw DataError("model header invalid in " + path);
    }
    int prev = m.input_dim();
    for (const auto& layer : j.at("layers")) {
      const auto& w = layer.at("w");
      const auto& b = layer.at("b");
      const int rows = static_cast<int>(w.size());
      if (rows != prev) {
        throw DataError("model layer dimension mismatch in " + path);
      }
      const int cols = static_cast<int>(w.at(0).size());
      Eigen::MatrixXd wm(rows, cols);
      for (int i = 0; i < rows; ++i) {
        const auto& row = w.at(i);
        if (static_cast<int>(row.size()) != cols) {
          throw DataError("ragged weight matrix in " + path);
        }
        for (int k = 0; k < cols; ++k) {
          wm(i, k) = row.at(k).get<double>();
        }
      }
      if (static_cast<int>(b.size()) != cols) {
        throw DataError("bias dimension mismatch in " + path);
      }
      Eigen::VectorXd bv(cols);
      for (int i = 0; i < cols; ++i) {
        bv(i) = b.at(i).get<double>();
      }
      m.weights.push_back(std::move(wm));
      m.biases.push_back(std::move(bv));
      prev = cols;
    }
    if (m.weights.empty() || m.output_dim() != num_paths) {
      throw DataError("model output dimension mismatch in " + path);
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("model field error in " + path + ": " + e.what());
  }
}

}  // namespace telab
