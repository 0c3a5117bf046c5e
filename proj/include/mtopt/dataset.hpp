#pragma once

#include <atomic>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <mutex>
#include <thread>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "mtopt/model_io.hpp"
#include "mtopt/redundancy.hpp"
#include "mtopt/rng.hpp"

namespace mtopt {

/// Closed sampling intervals per state and torque dimension.
struct SamplingRanges {
  std::vector<std::pair<double, double>> q, qdot, tau;

  void validate(const MusculoskeletalModel& model) const {
    if (static_cast<int>(q.size()) != model.state_dofs() ||
        static_cast<int>(qdot.size()) != model.state_dofs() ||
        static_cast<int>(tau.size()) != model.actuated_count())
      throw ValidationError("sampling ranges: dimension mismatch with the model");
    const auto check = [](const std::vector<std::pair<double, double>>& v,
                          const char* what) {
      for (const auto& [lo, hi] : v)
        if (!(lo < hi))
          throw ValidationError(std::string("sampling ranges: ") + what +
                                " interval must have lower < upper");
    };
    check(q, "q");
    check(qdot, "qdot");
    check(tau, "tau");
  }
};

inline SamplingRanges load_ranges(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open ranges file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("ranges parse error: ") + e.what());
  }
  SamplingRanges r;
  const auto read = [&](const char* key) {
    std::vector<std::pair<double, double>> out;
    for (const auto& pair : j.at(key)) out.emplace_back(pair.at(0), pair.at(1));
    return out;
  };
  r.q = read("q");
  r.qdot = read("qdot");
  r.tau = read("tau");
  return r;
}

enum class DatasetKind : uint8_t { Correction = 0, Energy = 1, AugmentedEnergy = 2 };

inline const char* dataset_kind_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::Correction: return "r";
    case DatasetKind::Energy: return "e";
    case DatasetKind::AugmentedEnergy: return "etilde";
  }
  return "?";
}

/// Row-per-sample regression dataset with provenance metadata.
struct Dataset {
  DatasetKind kind = DatasetKind::Correction;
  uint64_t model_fingerprint = 0;
  double w_penalty = 0.0;  // only meaningful for the augmented-energy kind
  MatrixXd inputs;         // n x input_dim, rows are (q, qdot, tau)
  MatrixXd targets;        // n x target_dim

  int size() const { return static_cast<int>(inputs.rows()); }
  int input_dim() const { return static_cast<int>(inputs.cols()); }
  int target_dim() const { return static_cast<int>(targets.cols()); }

  uint64_t content_hash() const {
    uint64_t h = fnv1a64(&model_fingerprint, sizeof(model_fingerprint));
    const uint8_t k = static_cast<uint8_t>(kind);
    h = fnv1a64(&k, 1, h);
    for (int i = 0; i < size(); ++i) {
      for (int c = 0; c < input_dim(); ++c) {
        const double v = inputs(i, c);
        h = fnv1a64(&v, sizeof(v), h);
      }
      for (int c = 0; c < target_dim(); ++c) {
        const double v = targets(i, c);
        h = fnv1a64(&v, sizeof(v), h);
      }
    }
    return h;
  }
};

namespace detail {

constexpr char kDatasetMagic[8] = {'M', 'T', 'O', 'P', 'T', 'D', 'S', '1'};

}  // namespace detail

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset file: " + path);
  out.write(detail::kDatasetMagic, 8);
  const uint32_t version = 1;
  const uint8_t kind = static_cast<uint8_t>(ds.kind);
  const uint8_t pad[3] = {0, 0, 0};
  const uint32_t din = static_cast<uint32_t>(ds.input_dim());
  const uint32_t dout = static_cast<uint32_t>(ds.target_dim());
  const uint64_t n = static_cast<uint64_t>(ds.size());
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&kind), 1);
  out.write(reinterpret_cast<const char*>(pad), 3);
  out.write(reinterpret_cast<const char*>(&din), 4);
  out.write(reinterpret_cast<const char*>(&dout), 4);
  out.write(reinterpret_cast<const char*>(&n), 8);
  out.write(reinterpret_cast<const char*>(&ds.model_fingerprint), 8);
  out.write(reinterpret_cast<const char*>(&ds.w_penalty), 8);
  std::vector<double> row(din + dout);
  for (int i = 0; i < ds.size(); ++i) {
    for (uint32_t c = 0; c < din; ++c) row[c] = ds.inputs(i, c);
    for (uint32_t c = 0; c < dout; ++c) row[din + c] = ds.targets(i, c);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(double)));
  }
  if (!out) throw IoError("failed while writing dataset file: " + path);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset file: " + path);
  long long offset = 8;
  const auto fail_at = [&](const char* what) {
    throw IoError("dataset file " + path + ": " + what + " (truncated at byte " +
                  std::to_string(offset) + ")");
  };
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, detail::kDatasetMagic, 8) != 0)
    throw ParseError("dataset file " + path + ": bad magic");
  uint32_t version = 0, din = 0, dout = 0;
  uint8_t kind = 0, pad[3];
  uint64_t n = 0, fp = 0;
  double wpen = 0;
  const auto read_field = [&](void* dst, int bytes, const char* what) {
    if (!in.read(static_cast<char*>(dst), bytes)) fail_at(what);
    offset += bytes;
  };
  read_field(&version, 4, "missing version");
  if (version != 1) throw ParseError("dataset file: unsupported version");
  read_field(&kind, 1, "missing kind");
  read_field(pad, 3, "missing header pad");
  read_field(&din, 4, "missing input dim");
  read_field(&dout, 4, "missing target dim");
  read_field(&n, 8, "missing count");
  read_field(&fp, 8, "missing fingerprint");
  read_field(&wpen, 8, "missing penalty weight");

  Dataset ds;
  ds.kind = static_cast<DatasetKind>(kind);
  ds.model_fingerprint = fp;
  ds.w_penalty = wpen;
  ds.inputs.resize(static_cast<long>(n), din);
  ds.targets.resize(static_cast<long>(n), dout);
  std::vector<double> row(din + dout);
  for (uint64_t i = 0; i < n; ++i) {
    if (!in.read(reinterpret_cast<char*>(row.data()),
                 static_cast<std::streamsize>(row.size() * sizeof(double)))) {
      throw IoError("dataset file " + path + ": truncated at byte " +
                    std::to_string(offset + static_cast<long long>(i) * (din + dout) * 8));
    }
    for (uint32_t c = 0; c < din; ++c) ds.inputs(static_cast<long>(i), c) = row[c];
    for (uint32_t c = 0; c < dout; ++c) ds.targets(static_cast<long>(i), c) = row[din + c];
  }
  return ds;
}

inline void export_dataset_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write CSV file: " + path);
  for (int c = 0; c < ds.input_dim(); ++c) out << "in_" << c << ",";
  for (int c = 0; c < ds.target_dim(); ++c)
    out << "target_" << c << (c + 1 < ds.target_dim() ? "," : "");
  out << "\n";
  char buf[32];
  for (int i = 0; i < ds.size(); ++i) {
    for (int c = 0; c < ds.input_dim(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", ds.inputs(i, c));
      out << buf << ",";
    }
    for (int c = 0; c < ds.target_dim(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", ds.targets(i, c));
      out << buf << (c + 1 < ds.target_dim() ? "," : "");
    }
    out << "\n";
  }
}

struct SampleStats {
  uint64_t rejections = 0;
};

namespace detail {

// Streams are segmented by draw attempt so a rejected sample re-draws fresh
// values while sample i's randomness stays a pure function of (seed, i).
inline double draw_dim(const CounterRng& rng, uint64_t attempt, uint64_t dim,
                       uint64_t sample, double lo, double hi) {
  return rng.uniform(attempt * 4096 + dim, sample, lo, hi);
}

constexpr int kMaxAttempts = 256;

template <typename PerSample>
void generate_parallel(int n, int threads, PerSample&& body) {
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&]() {
      try {
        while (true) {
          const int i = next.fetch_add(256);
          if (i >= n) return;
          for (int k = i; k < std::min(n, i + 256); ++k) body(k);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

/// Targets from the exact correction solver on uniformly sampled (q, qdot,
/// tau). States that buckle a muscle fiber are rejected and redrawn.
inline Dataset sample_r_dataset(const MusculoskeletalModel& model,
                                const SamplingRanges& ranges, int n, uint64_t seed,
                                int threads = 1, SampleStats* stats = nullptr) {
  ranges.validate(model);
  const int ns = model.state_dofs(), na = model.actuated_count();
  const int din = 2 * ns + na;
  Dataset ds;
  ds.kind = DatasetKind::Correction;
  ds.model_fingerprint = model_fingerprint(model);
  ds.inputs.resize(n, din);
  ds.targets.resize(n, na);
  const CounterRng rng(seed);
  std::atomic<uint64_t> rejections{0};

  detail::generate_parallel(n, threads, [&](int i) {
    for (int attempt = 0;; ++attempt) {
      if (attempt >= detail::kMaxAttempts)
        throw ValidationError("sample_r_dataset: ranges rejected too many draws");
      JointState s = JointState::zero(ns);
      VectorXd tau(na);
      int d = 0;
      for (int k = 0; k < ns; ++k, ++d)
        s.q[k] = detail::draw_dim(rng, attempt, d, i, ranges.q[k].first, ranges.q[k].second);
      for (int k = 0; k < ns; ++k, ++d)
        s.qd[k] =
            detail::draw_dim(rng, attempt, d, i, ranges.qdot[k].first, ranges.qdot[k].second);
      for (int k = 0; k < na; ++k, ++d)
        tau[k] =
            detail::draw_dim(rng, attempt, d, i, ranges.tau[k].first, ranges.tau[k].second);
      try {
        const auto corr = correction(model, s, tau);
        ds.inputs.row(i).head(ns) = s.q.transpose();
        ds.inputs.row(i).segment(ns, ns) = s.qd.transpose();
        ds.inputs.row(i).tail(na) = tau.transpose();
        ds.targets.row(i) = corr.delta_tau.transpose();
        return;
      } catch (const DegenerateGeometryError&) {
        rejections.fetch_add(1);
      }
    }
  });

  if (stats) stats->rejections = rejections.load();
  if (rejections.load() > static_cast<uint64_t>(n))
    throw ValidationError("sample_r_dataset: rejection rate above 50%, ranges unusable");
  return ds;
}

/// Feasible-by-construction energy dataset: draw (q, qdot, a), map the
/// activation through the muscle dynamics to a torque, keep (q, qdot, tau)
/// with the minimal-energy value as target. The drawn activation is
/// discarded.
inline Dataset sample_e_dataset(const MusculoskeletalModel& model,
                                const SamplingRanges& ranges, int n, uint64_t seed,
                                int threads = 1, SampleStats* stats = nullptr) {
  ranges.validate(model);
  const int ns = model.state_dofs(), na = model.actuated_count();
  const int nm = model.muscle_count();
  Dataset ds;
  ds.kind = DatasetKind::Energy;
  ds.model_fingerprint = model_fingerprint(model);
  ds.inputs.resize(n, 2 * ns + na);
  ds.targets.resize(n, 1);
  const CounterRng rng(seed);
  const VectorXd w = model.effort_weights();
  std::atomic<uint64_t> rejections{0};

  detail::generate_parallel(n, threads, [&](int i) {
    for (int attempt = 0;; ++attempt) {
      if (attempt >= detail::kMaxAttempts)
        throw ValidationError("sample_e_dataset: ranges rejected too many draws");
      JointState s = JointState::zero(ns);
      VectorXd a(nm);
      int d = 0;
      for (int k = 0; k < ns; ++k, ++d)
        s.q[k] = detail::draw_dim(rng, attempt, d, i, ranges.q[k].first, ranges.q[k].second);
      for (int k = 0; k < ns; ++k, ++d)
        s.qd[k] =
            detail::draw_dim(rng, attempt, d, i, ranges.qdot[k].first, ranges.qdot[k].second);
      for (int k = 0; k < nm; ++k, ++d)
        a[k] = detail::draw_dim(rng, attempt, d, i, 0.0, 1.0);
      try {
        const auto map = torque_affine_map(model, s);
        const VectorXd tau = map.apply(a);
        const auto e = energy(map, w, tau);
        ds.inputs.row(i).head(ns) = s.q.transpose();
        ds.inputs.row(i).segment(ns, ns) = s.qd.transpose();
        ds.inputs.row(i).tail(na) = tau.transpose();
        ds.targets(i, 0) = e.value;
        return;
      } catch (const DegenerateGeometryError&) {
        rejections.fetch_add(1);
      }
    }
  });

  if (stats) stats->rejections = rejections.load();
  if (rejections.load() > static_cast<uint64_t>(n))
    throw ValidationError("sample_e_dataset: rejection rate above 50%, ranges unusable");
  return ds;
}

/// Augmented-energy dataset: the first ceil(n/2) rows are feasible draws,
/// the rest uniform torque draws that may be infeasible; targets come from
/// the augmented energy with the given penalty weight.
inline Dataset sample_e_tilde_dataset(const MusculoskeletalModel& model,
                                      const SamplingRanges& ranges, int n, uint64_t seed,
                                      double w_penalty, int threads = 1,
                                      SampleStats* stats = nullptr) {
  ranges.validate(model);
  const int ns = model.state_dofs(), na = model.actuated_count();
  const int nm = model.muscle_count();
  const int n_feasible = (n + 1) / 2;
  Dataset ds;
  ds.kind = DatasetKind::AugmentedEnergy;
  ds.model_fingerprint = model_fingerprint(model);
  ds.w_penalty = w_penalty;
  ds.inputs.resize(n, 2 * ns + na);
  ds.targets.resize(n, 1);
  const CounterRng rng(seed);
  const VectorXd w = model.effort_weights();
  std::atomic<uint64_t> rejections{0};

  detail::generate_parallel(n, threads, [&](int i) {
    const bool feasible_half = i < n_feasible;
    for (int attempt = 0;; ++attempt) {
      if (attempt >= detail::kMaxAttempts)
        throw ValidationError("sample_e_tilde_dataset: ranges rejected too many draws");
      JointState s = JointState::zero(ns);
      int d = 0;
      for (int k = 0; k < ns; ++k, ++d)
        s.q[k] = detail::draw_dim(rng, attempt, d, i, ranges.q[k].first, ranges.q[k].second);
      for (int k = 0; k < ns; ++k, ++d)
        s.qd[k] =
            detail::draw_dim(rng, attempt, d, i, ranges.qdot[k].first, ranges.qdot[k].second);
      try {
        const auto map = torque_affine_map(model, s);
        VectorXd tau(na);
        if (feasible_half) {
          VectorXd a(nm);
          for (int k = 0; k < nm; ++k, ++d)
            a[k] = detail::draw_dim(rng, attempt, d, i, 0.0, 1.0);
          tau = map.apply(a);
        } else {
          for (int k = 0; k < na; ++k, ++d)
            tau[k] = detail::draw_dim(rng, attempt, d, i, ranges.tau[k].first,
                                      ranges.tau[k].second);
        }
        const double value = augmented_energy(map, w, tau, w_penalty);
        ds.inputs.row(i).head(ns) = s.q.transpose();
        ds.inputs.row(i).segment(ns, ns) = s.qd.transpose();
        ds.inputs.row(i).tail(na) = tau.transpose();
        ds.targets(i, 0) = value;
        return;
      } catch (const DegenerateGeometryError&) {
        rejections.fetch_add(1);
      }
    }
  });

  if (stats) stats->rejections = rejections.load();
  if (rejections.load() > static_cast<uint64_t>(n))
    throw ValidationError("sample_e_tilde_dataset: rejection rate above 50%, ranges unusable");
  return ds;
}

}  // namespace mtopt
