#include "mckv/engine.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mckv/errors.hpp"
#include "mckv/kernels.hpp"

namespace mckv {

EnsembleState::EnsembleState(int d, std::size_t n) : dim(d), count(n) {
  if (d < 1) throw ParameterError("engine: dim must be >= 1");
  if (n == 0) throw ParameterError("engine: empty ensemble");
  comps.assign(static_cast<std::size_t>(d) * n, 0.0);
}

std::vector<double> EnsembleState::mean() const {
  std::vector<double> m(static_cast<std::size_t>(dim), 0.0);
  for (int j = 0; j < dim; ++j) {
    m[static_cast<std::size_t>(j)] = kernels::sum(comp(j), count) / static_cast<double>(count);
  }
  return m;
}

EmpiricalMeasure EnsembleState::to_measure() const {
  std::vector<double> pts(comps.size());
  for (std::size_t i = 0; i < count; ++i) {
    for (int j = 0; j < dim; ++j) {
      pts[i * static_cast<std::size_t>(dim) + static_cast<std::size_t>(j)] = comp(j)[i];
    }
  }
  return EmpiricalMeasure(dim, std::move(pts));
}

EmpiricalMeasure PathEnsemble::measure_at_node(std::size_t k) const {
  const auto block = state_block(k);
  std::vector<double> pts(block.size());
  for (std::size_t i = 0; i < count; ++i) {
    for (int j = 0; j < dim; ++j) {
      pts[i * static_cast<std::size_t>(dim) + static_cast<std::size_t>(j)] =
          block[static_cast<std::size_t>(j) * count + i];
    }
  }
  return EmpiricalMeasure(dim, std::move(pts));
}

// ---------------------------------------------------------------------------
// Initial samplers

InitialSampler point_mass_initial(std::vector<double> x0) {
  if (x0.empty()) throw ParameterError("engine: empty point mass");
  return [x0 = std::move(x0)](RandomStream&, std::span<double> out) {
    std::copy(x0.begin(), x0.end(), out.begin());
  };
}

InitialSampler gaussian_initial(std::vector<double> mean, double sd) {
  if (mean.empty()) throw ParameterError("engine: empty mean");
  if (!(sd >= 0.0)) throw ParameterError("engine: sd must be >= 0");
  return [mean = std::move(mean), sd](RandomStream& stream, std::span<double> out) {
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = mean[j] + sd * stream.normal();
  };
}

InitialSampler pareto_initial(double exponent, double scale) {
  if (!(exponent > 0.0) || !(scale > 0.0)) {
    throw ParameterError("engine: pareto needs positive exponent and scale");
  }
  return [exponent, scale](RandomStream& stream, std::span<double> out) {
    const double r = scale * std::pow(stream.uniform_pos(), -1.0 / exponent);
    if (out.size() == 1) {
      out[0] = r;
      return;
    }
    stream.unit_sphere(out.data(), out.size());
    for (auto& v : out) v *= r;
  };
}

// ---------------------------------------------------------------------------
// Ensemble noise

EnsembleNoise build_ensemble_noise(const LevyModel& model, const TimeGrid& base_grid,
                                   std::size_t count, std::uint64_t master,
                                   std::uint64_t replication, SmallJumpScheme scheme) {
  if (count == 0) throw ParameterError("engine: empty ensemble");
  const int d = model.dim();
  EnsembleNoise noise;
  noise.dim = d;
  noise.count = count;
  noise.base = std::make_shared<TimeGrid>(base_grid);

  // phase 1: per-particle events; streams stay alive so the small-increment
  // draws continue the same sequences afterwards
  std::vector<RandomStream> streams;
  streams.reserve(count);
  std::vector<std::vector<BigJumpEvent>> events(count);
  std::vector<double> all_times;
  for (std::size_t i = 0; i < count; ++i) {
    streams.emplace_back(SeedLineage{master, purpose::kNoise, replication, i});
    events[i] = sample_big_jumps(model, base_grid.horizon(), kInf, streams.back());
    for (const auto& ev : events[i]) all_times.push_back(ev.time);
  }
  noise.grid = std::make_shared<TimeGrid>(base_grid.refined_with(all_times));
  const TimeGrid& grid = *noise.grid;

  noise.base_node_index.resize(base_grid.num_nodes());
  {
    const auto& union_nodes = grid.nodes();
    for (std::size_t k = 0; k < base_grid.num_nodes(); ++k) {
      const auto it =
          std::lower_bound(union_nodes.begin(), union_nodes.end(), base_grid.node(k));
      noise.base_node_index[k] = static_cast<std::size_t>(it - union_nodes.begin());
    }
  }

  // phase 2: small increments per particle, scattered into the node-major block
  const std::size_t steps = grid.num_steps();
  noise.small.assign(steps * static_cast<std::size_t>(d) * count, 0.0);
  for (std::size_t i = 0; i < count; ++i) {
    const auto small_i =
        synthesize_small_jump_increments(model, grid, events[i], streams[i], scheme);
    for (std::size_t k = 0; k < steps; ++k) {
      for (int j = 0; j < d; ++j) {
        noise.small[(k * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)) * count + i] =
            small_i[k * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)];
      }
    }
  }

  // event records with union-node indices
  const auto& union_nodes = grid.nodes();
  for (std::size_t i = 0; i < count; ++i) {
    for (auto& ev : events[i]) {
      EnsembleNoise::Event rec;
      const auto it = std::lower_bound(union_nodes.begin(), union_nodes.end(), ev.time);
      rec.node = static_cast<std::size_t>(it - union_nodes.begin());
      rec.particle = i;
      rec.norm = std::sqrt(kernels::sum_sq(ev.size.data(), ev.size.size()));
      rec.size = std::move(ev.size);
      noise.events.push_back(std::move(rec));
    }
  }
  std::sort(noise.events.begin(), noise.events.end(),
            [](const EnsembleNoise::Event& a, const EnsembleNoise::Event& b) {
              return a.node != b.node ? a.node < b.node : a.particle < b.particle;
            });
  return noise;
}

// ---------------------------------------------------------------------------
// Stepping

namespace {

// Left limit of the flow at time t: value of the interval strictly before t
// when t sits exactly on a flow node.
std::size_t flow_node_before(const MeasureFlow& flow, double t) {
  std::size_t idx = flow.grid->floor_index(t);
  if (idx > 0 && flow.grid->node(idx) == t) --idx;
  return idx;
}

struct FrozenMeasureStore {
  std::vector<double> mean;
  EmpiricalMeasure cloud;
  std::vector<double> summary;
};

// Builds the frozen view for a system at evaluation time t.  For interacting
// systems the caller passes the current state; for frozen systems the flow is
// read at `t` (or its left limit when `left_limit` is set), through the
// prepared per-node tables when available.
MeasureView freeze_measure(const CoefficientSet& coeffs, const MeasureFlow* flow,
                           const EnsembleState* state, double t, bool left_limit,
                           FrozenMeasureStore& store, const PreparedFlow* prepared) {
  MeasureView view;
  if (flow) {
    if (coeffs.dependence == MeasureDependence::General &&
        flow->rep == MeasureFlow::Rep::MeanOnly) {
      throw GridError("engine: coefficients need a cloud-valued flow");
    }
    const std::size_t node =
        left_limit ? flow_node_before(*flow, t) : flow->grid->floor_index(t);
    if (prepared) {
      if (prepared->flow != flow) throw ParameterError("engine: prepared flow mismatch");
      view.mean = prepared->node_means[node];
      if (flow->rep == MeasureFlow::Rep::Cloud) view.cloud = &prepared->node_clouds[node];
      if (!prepared->node_summaries.empty()) view.summary = prepared->node_summaries[node];
      return view;
    }
    if (flow->rep == MeasureFlow::Rep::MeanOnly) {
      const auto m = flow->mean_at_node(node);
      store.mean.assign(m.begin(), m.end());
    } else {
      store.cloud = flow->cloud_at_node(node);
      store.mean.assign(static_cast<std::size_t>(flow->dim), 0.0);
      for (std::size_t i = 0; i < store.cloud.size(); ++i) {
        const auto p = store.cloud.point(i);
        for (int j = 0; j < flow->dim; ++j) {
          store.mean[static_cast<std::size_t>(j)] += p[static_cast<std::size_t>(j)];
        }
      }
      for (auto& v : store.mean) v /= static_cast<double>(store.cloud.size());
      view.cloud = &store.cloud;
    }
  } else {
    store.mean = state->mean();
    if (coeffs.dependence == MeasureDependence::General) {
      store.cloud = state->to_measure();
      view.cloud = &store.cloud;
    }
  }
  view.mean = store.mean;
  if (coeffs.summarize) {
    store.summary = coeffs.summarize(t, view);
    view.summary = store.summary;
  }
  return view;
}

}  // namespace

PreparedFlow PreparedFlow::make(const MeasureFlow& flow, const CoefficientSet& coeffs) {
  flow.validate();
  if (coeffs.dependence == MeasureDependence::General &&
      flow.rep != MeasureFlow::Rep::Cloud) {
    throw GridError("engine: coefficients need a cloud-valued flow");
  }
  PreparedFlow prep;
  prep.flow = &flow;
  prep.coeffs = &coeffs;
  const std::size_t nodes = flow.grid->num_nodes();
  prep.node_means.resize(nodes);
  if (flow.rep == MeasureFlow::Rep::Cloud) prep.node_clouds.reserve(nodes);
  for (std::size_t k = 0; k < nodes; ++k) {
    if (flow.rep == MeasureFlow::Rep::MeanOnly) {
      const auto m = flow.mean_at_node(k);
      prep.node_means[k].assign(m.begin(), m.end());
    } else {
      prep.node_clouds.push_back(flow.cloud_at_node(k));
      const auto& cloud = prep.node_clouds.back();
      auto& mean = prep.node_means[k];
      mean.assign(static_cast<std::size_t>(flow.dim), 0.0);
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto p = cloud.point(i);
        for (int j = 0; j < flow.dim; ++j) {
          mean[static_cast<std::size_t>(j)] += p[static_cast<std::size_t>(j)];
        }
      }
      for (auto& v : mean) v /= static_cast<double>(cloud.size());
    }
  }
  if (coeffs.summarize) {
    prep.node_summaries.resize(nodes);
    for (std::size_t k = 0; k < nodes; ++k) {
      MeasureView view;
      view.mean = prep.node_means[k];
      if (flow.rep == MeasureFlow::Rep::Cloud) view.cloud = &prep.node_clouds[k];
      prep.node_summaries[k] = coeffs.summarize(flow.grid->node(k), view);
    }
  }
  return prep;
}

namespace {

void check_finite_or_throw(const EnsembleState& state, double t) {
  if (kernels::all_finite(state.comps.data(), state.comps.size())) return;
  for (std::size_t i = 0; i < state.count; ++i) {
    for (int j = 0; j < state.dim; ++j) {
      if (!std::isfinite(state.comp(j)[i])) {
        std::ostringstream msg;
        msg << "engine: particle " << i << " became non-finite at t = " << t;
        throw BlowUpError(i, t, msg.str());
      }
    }
  }
}

}  // namespace

void step_particle_system(EnsembleState& state, const CoefficientSet& coeffs,
                          const MeasureView& frozen, double dt,
                          std::span<const double> increments,
                          std::span<const EnsembleNoise::Event> node_events,
                          std::span<const double> comp_rate) {
  const int d = state.dim;
  const std::size_t n = state.count;
  const std::size_t dn = static_cast<std::size_t>(d) * n;
  if (coeffs.dim != d) throw ParameterError("engine: coefficient/state dim mismatch");
  if (!increments.empty() && increments.size() != dn) {
    throw ParameterError("engine: noise block size mismatch");
  }
  if (!(dt >= 0.0)) throw ParameterError("engine: negative dt");

  if (dt > 0.0) {
    thread_local std::vector<double> drift_buf;
    drift_buf.assign(dn, 0.0);

    // drift at the frozen (start-of-step) state and measure
    if (coeffs.drift_batch) {
      coeffs.drift_batch(state.time, state.comps.data(), n, frozen, drift_buf.data());
    } else {
      thread_local std::vector<double> x_pt, b_pt;
      x_pt.assign(static_cast<std::size_t>(d), 0.0);
      b_pt.assign(static_cast<std::size_t>(d), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) x_pt[static_cast<std::size_t>(j)] = state.comp(j)[i];
        coeffs.drift(state.time, x_pt, frozen, b_pt);
        for (int j = 0; j < d; ++j) {
          drift_buf[static_cast<std::size_t>(j) * n + i] = b_pt[static_cast<std::size_t>(j)];
        }
      }
    }
    for (int j = 0; j < d; ++j) {
      kernels::axpy(dt, drift_buf.data() + static_cast<std::size_t>(j) * n, state.comp(j), n);
    }
  }

  // noise increment through sigma
  if (!increments.empty()) {
    if (coeffs.sigma_is_constant) {
      const auto& b = coeffs.constant_sigma;
      for (int j = 0; j < d; ++j) {
        double* xj = state.comp(j);
        double comp_drift = 0.0;
        for (int l = 0; l < d; ++l) {
          const double bjl = b[static_cast<std::size_t>(j * d + l)];
          if (bjl == 0.0) continue;
          kernels::axpy(bjl, increments.data() + static_cast<std::size_t>(l) * n, xj, n);
          if (!comp_rate.empty()) comp_drift += bjl * comp_rate[static_cast<std::size_t>(l)];
        }
        if (comp_drift != 0.0) kernels::scale_add(xj, 1.0, dt * comp_drift, n);
      }
    } else {
      thread_local std::vector<double> x_pt, w_pt, s_pt;
      x_pt.assign(static_cast<std::size_t>(d), 0.0);
      w_pt.assign(static_cast<std::size_t>(d), 0.0);
      s_pt.assign(static_cast<std::size_t>(d) * static_cast<std::size_t>(d), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) {
          x_pt[static_cast<std::size_t>(j)] = state.comp(j)[i];
          w_pt[static_cast<std::size_t>(j)] =
              increments[static_cast<std::size_t>(j) * n + i] +
              (comp_rate.empty() ? 0.0 : dt * comp_rate[static_cast<std::size_t>(j)]);
        }
        coeffs.sigma(state.time, x_pt, frozen, s_pt);
        for (int j = 0; j < d; ++j) {
          double acc = 0.0;
          for (int l = 0; l < d; ++l) {
            acc += s_pt[static_cast<std::size_t>(j * d + l)] * w_pt[static_cast<std::size_t>(l)];
          }
          state.comp(j)[i] += acc;
        }
      }
    }
  }
  state.time += dt;

  // big jumps at the end node: sigma at pre-jump state and pre-jump measure
  if (!node_events.empty()) {
    thread_local std::vector<double> x_pt, s_pt;
    x_pt.assign(static_cast<std::size_t>(d), 0.0);
    s_pt.assign(static_cast<std::size_t>(d) * static_cast<std::size_t>(d), 0.0);
    for (const auto& ev : node_events) {
      const std::size_t i = ev.particle;
      if (coeffs.sigma_is_constant) {
        for (int j = 0; j < d; ++j) {
          double acc = 0.0;
          for (int l = 0; l < d; ++l) {
            acc += coeffs.constant_sigma[static_cast<std::size_t>(j * d + l)] *
                   ev.size[static_cast<std::size_t>(l)];
          }
          state.comp(j)[i] += acc;
        }
      } else {
        for (int j = 0; j < d; ++j) x_pt[static_cast<std::size_t>(j)] = state.comp(j)[i];
        coeffs.sigma(state.time, x_pt, frozen, s_pt);
        for (int j = 0; j < d; ++j) {
          double acc = 0.0;
          for (int l = 0; l < d; ++l) {
            acc += s_pt[static_cast<std::size_t>(j * d + l)] * ev.size[static_cast<std::size_t>(l)];
          }
          state.comp(j)[i] += acc;
        }
      }
    }
  }
}

void run_coupled_systems(const LevyModel& model, const EnsembleNoise& noise,
                         std::span<const SystemSpec> systems, const InitialSampler& initial,
                         std::uint64_t master, std::uint64_t replication,
                         const NodeObserver& observer) {
  if (systems.empty()) throw ParameterError("engine: no systems");
  const int d = noise.dim;
  const std::size_t n = noise.count;
  for (const auto& sys : systems) {
    if (!sys.coeffs) throw ParameterError("engine: system without coefficients");
    sys.coeffs->validate();
    if (sys.coeffs->dim != d) throw ParameterError("engine: coefficient dim mismatch");
    if (sys.frozen_flow) {
      sys.frozen_flow->validate();
      if (sys.frozen_flow->dim != d) throw GridError("engine: flow dim mismatch");
      if (sys.frozen_flow->grid->horizon() < noise.grid->horizon() - 1e-12) {
        throw GridError("engine: flow horizon shorter than simulation horizon");
      }
    }
    if (!(sys.truncation_level > 1.0)) {
      throw ParameterError("engine: truncation level must exceed 1");
    }
  }

  // shared initial conditions
  EnsembleState init_state(d, n);
  {
    std::vector<double> x(static_cast<std::size_t>(d));
    for (std::size_t i = 0; i < n; ++i) {
      RandomStream stream(SeedLineage{master, purpose::kInitial, replication, i});
      initial(stream, x);
      for (int j = 0; j < d; ++j) init_state.comp(j)[i] = x[static_cast<std::size_t>(j)];
    }
  }

  const std::size_t m = systems.size();
  std::vector<EnsembleState> states(m, init_state);
  std::vector<std::vector<double>> comp_rates(m);
  for (std::size_t s = 0; s < m; ++s) {
    if (!std::isinf(systems[s].truncation_level)) {
      const auto mean = model.mean_annulus(1.0, systems[s].truncation_level);
      comp_rates[s].resize(mean.size());
      for (std::size_t j = 0; j < mean.size(); ++j) comp_rates[s][j] = -mean[j];
    }
  }

  observer(0, states);

  // per-node tables for the frozen systems, built once
  std::vector<PreparedFlow> prepared(m);
  for (std::size_t s = 0; s < m; ++s) {
    if (systems[s].frozen_flow) {
      prepared[s] = PreparedFlow::make(*systems[s].frozen_flow, *systems[s].coeffs);
    }
  }
  const auto prepared_for = [&](std::size_t s) -> const PreparedFlow* {
    return systems[s].frozen_flow ? &prepared[s] : nullptr;
  };

  const TimeGrid& grid = *noise.grid;
  std::vector<FrozenMeasureStore> stores(m);
  std::vector<EnsembleNoise::Event> filtered;
  std::size_t ev_cursor = 0;
  for (std::size_t k = 0; k < grid.num_steps(); ++k) {
    const double t0 = grid.node(k);
    const double dt = grid.dt(k);
    const std::size_t end_node = k + 1;

    // events scheduled at the end node
    const std::size_t ev_begin = ev_cursor;
    while (ev_cursor < noise.events.size() && noise.events[ev_cursor].node == end_node) {
      ++ev_cursor;
    }
    const std::span<const EnsembleNoise::Event> node_events{
        noise.events.data() + ev_begin, ev_cursor - ev_begin};

    for (std::size_t s = 0; s < m; ++s) {
      const auto& sys = systems[s];
      auto& state = states[s];
      const MeasureView frozen = freeze_measure(*sys.coeffs, sys.frozen_flow, &state, t0,
                                                /*left_limit=*/false, stores[s],
                                                prepared_for(s));
      // advance without jump application first: pass empty events
      step_particle_system(state, *sys.coeffs, frozen, dt, noise.step_block(k), {},
                           comp_rates[s]);
      if (!node_events.empty()) {
        // pre-jump measure: post-advance state (interacting) or flow left
        // limit at the jump time
        FrozenMeasureStore jump_store;
        const MeasureView pre_jump =
            sys.coeffs->sigma_is_constant
                ? frozen
                : freeze_measure(*sys.coeffs, sys.frozen_flow, &state, grid.node(end_node),
                                 /*left_limit=*/true, jump_store, prepared_for(s));
        filtered.clear();
        for (const auto& ev : node_events) {
          if (ev.norm < sys.truncation_level) filtered.push_back(ev);
        }
        step_particle_system(state, *sys.coeffs, pre_jump, 0.0, {}, filtered, {});
      }
      check_finite_or_throw(state, grid.node(end_node));
    }
    observer(end_node, states);
  }
}

namespace {

PathEnsemble record_single_system(const LevyModel& model, const CoefficientSet& coeffs,
                                  const MeasureFlow* flow, const TimeGrid& base_grid,
                                  std::size_t count, std::uint64_t master,
                                  std::uint64_t replication, SmallJumpScheme scheme,
                                  const InitialSampler& initial) {
  const EnsembleNoise noise =
      build_ensemble_noise(model, base_grid, count, master, replication, scheme);
  PathEnsemble path;
  path.grid = noise.grid;
  path.dim = noise.dim;
  path.count = count;
  const std::size_t stride = static_cast<std::size_t>(noise.dim) * count;
  path.states.assign(noise.grid->num_nodes() * stride, 0.0);
  path.sup_norm.assign(count, 0.0);

  std::vector<double> norm_buf(count);
  const SystemSpec spec{&coeffs, flow, kInf};
  run_coupled_systems(model, noise, {&spec, 1}, initial, master, replication,
                      [&](std::size_t node, std::span<const EnsembleState> states) {
                        const auto& st = states[0];
                        std::copy(st.comps.begin(), st.comps.end(),
                                  path.states.begin() + static_cast<std::ptrdiff_t>(node * stride));
                        if (st.dim == 1) {
                          kernels::max_abs_update(path.sup_norm.data(), st.comp(0), count);
                        } else {
                          std::fill(norm_buf.begin(), norm_buf.end(), 0.0);
                          for (int j = 0; j < st.dim; ++j) {
                            kernels::acc_sq(norm_buf.data(), st.comp(j), count);
                          }
                          kernels::sqrt_inplace(norm_buf.data(), count);
                          kernels::max_abs_update(path.sup_norm.data(), norm_buf.data(), count);
                        }
                      });
  return path;
}

}  // namespace

PathEnsemble simulate_particle_system(const LevyModel& model, const CoefficientSet& coeffs,
                                      const TimeGrid& base_grid, std::size_t count,
                                      std::uint64_t master, std::uint64_t replication,
                                      SmallJumpScheme scheme, const InitialSampler& initial) {
  return record_single_system(model, coeffs, nullptr, base_grid, count, master, replication,
                              scheme, initial);
}

PathEnsemble simulate_coupled_limit_copies(const LevyModel& model,
                                           const CoefficientSet& coeffs,
                                           const MeasureFlow& flow, const TimeGrid& base_grid,
                                           std::size_t count, std::uint64_t master,
                                           std::uint64_t replication, SmallJumpScheme scheme,
                                           const InitialSampler& initial) {
  return record_single_system(model, coeffs, &flow, base_grid, count, master, replication,
                              scheme, initial);
}

FrozenPath simulate_frozen_path(const LevyModel& model, const CoefficientSet& coeffs,
                                const MeasureFlow& flow, const TimeGrid& base_grid,
                                const SeedLineage& lineage, SmallJumpScheme scheme,
                                const InitialSampler& initial,
                                const PreparedFlow* prepared) {
  coeffs.validate();
  flow.validate();
  const int d = model.dim();
  if (coeffs.dim != d || flow.dim != d) {
    throw ParameterError("engine: dim mismatch in frozen path");
  }
  PreparedFlow local;
  if (!prepared) {
    local = PreparedFlow::make(flow, coeffs);
    prepared = &local;
  } else if (prepared->flow != &flow) {
    throw ParameterError("engine: prepared flow mismatch");
  }
  const NoiseRealization noise = synthesize_realization(model, base_grid, lineage, scheme);
  const TimeGrid& grid = *noise.grid;

  EnsembleState state(d, 1);
  {
    RandomStream init_stream(
        SeedLineage{lineage.master, purpose::kInitial, lineage.replication, lineage.particle});
    std::vector<double> x(static_cast<std::size_t>(d));
    initial(init_stream, x);
    for (int j = 0; j < d; ++j) state.comp(j)[0] = x[static_cast<std::size_t>(j)];
  }

  FrozenPath out;
  out.base_states.assign(base_grid.num_nodes() * static_cast<std::size_t>(d), 0.0);
  const auto record_if_base = [&](std::size_t union_node) {
    const double t = grid.node(union_node);
    // base nodes are a subset of union nodes; exact match test
    const auto& base_nodes = base_grid.nodes();
    const auto it = std::lower_bound(base_nodes.begin(), base_nodes.end(), t);
    if (it != base_nodes.end() && *it == t) {
      const std::size_t kb = static_cast<std::size_t>(it - base_nodes.begin());
      for (int j = 0; j < d; ++j) {
        out.base_states[kb * static_cast<std::size_t>(d) + static_cast<std::size_t>(j)] =
            state.comp(j)[0];
      }
    }
  };
  const auto update_sup = [&] {
    double sq = 0.0;
    for (int j = 0; j < d; ++j) sq += state.comp(j)[0] * state.comp(j)[0];
    out.sup_norm = std::max(out.sup_norm, std::sqrt(sq));
  };

  record_if_base(0);
  update_sup();

  FrozenMeasureStore store;
  std::size_t ev_cursor = 0;
  std::vector<EnsembleNoise::Event> node_events;
  for (std::size_t k = 0; k < grid.num_steps(); ++k) {
    const double t0 = grid.node(k);
    const double t1 = grid.node(k + 1);
    node_events.clear();
    while (ev_cursor < noise.events.size() && noise.events[ev_cursor].time <= t1) {
      const auto& ev = noise.events[ev_cursor];
      EnsembleNoise::Event rec;
      rec.node = k + 1;
      rec.particle = 0;
      rec.norm = std::sqrt(kernels::sum_sq(ev.size.data(), ev.size.size()));
      rec.size = ev.size;
      node_events.push_back(std::move(rec));
      ++ev_cursor;
    }
    const MeasureView frozen =
        freeze_measure(coeffs, &flow, nullptr, t0, /*left_limit=*/false, store, prepared);
    step_particle_system(state, coeffs, frozen, grid.dt(k), noise.step_increment(k), {},
                         noise.comp_rate);
    if (!node_events.empty()) {
      FrozenMeasureStore jump_store;
      const MeasureView pre_jump =
          coeffs.sigma_is_constant
              ? frozen
              : freeze_measure(coeffs, &flow, nullptr, t1, /*left_limit=*/true, jump_store,
                               prepared);
      step_particle_system(state, coeffs, pre_jump, 0.0, {}, node_events, {});
    }
    check_finite_or_throw(state, t1);
    record_if_base(k + 1);
    update_sup();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear mean flow

namespace {

// exp(M) for small dense d x d by scaling and squaring with a Taylor core.
std::vector<double> matrix_exponential(std::vector<double> m, int d) {
  const std::size_t dd = static_cast<std::size_t>(d) * static_cast<std::size_t>(d);
  double norm = 0.0;
  for (int i = 0; i < d; ++i) {
    double row = 0.0;
    for (int j = 0; j < d; ++j) row += std::fabs(m[static_cast<std::size_t>(i * d + j)]);
    norm = std::max(norm, row);
  }
  int squarings = 0;
  while (norm > 0.5) {
    norm *= 0.5;
    ++squarings;
  }
  const double scale = std::ldexp(1.0, -squarings);
  for (auto& v : m) v *= scale;

  const auto matmul = [d, dd](const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> c(dd, 0.0);
    for (int i = 0; i < d; ++i) {
      for (int l = 0; l < d; ++l) {
        const double ail = a[static_cast<std::size_t>(i * d + l)];
        if (ail == 0.0) continue;
        for (int j = 0; j < d; ++j) {
          c[static_cast<std::size_t>(i * d + j)] += ail * b[static_cast<std::size_t>(l * d + j)];
        }
      }
    }
    return c;
  };

  std::vector<double> result(dd, 0.0);
  for (int i = 0; i < d; ++i) result[static_cast<std::size_t>(i * d + i)] = 1.0;
  std::vector<double> term = result;
  for (int k = 1; k <= 24; ++k) {
    term = matmul(term, m);
    for (auto& v : term) v /= static_cast<double>(k);
    double mag = 0.0;
    for (std::size_t idx = 0; idx < dd; ++idx) {
      result[idx] += term[idx];
      mag = std::max(mag, std::fabs(term[idx]));
    }
    if (mag < 1e-18) break;
  }
  for (int s = 0; s < squarings; ++s) result = matmul(result, result);
  return result;
}

}  // namespace

MeasureFlow stable_ou_mean_flow(int dim, std::span<const double> a_mat,
                                std::span<const double> a_prime_mat,
                                std::span<const double> m0,
                                std::shared_ptr<const TimeGrid> grid) {
  if (!grid) throw ParameterError("engine: null grid");
  const std::size_t dd = static_cast<std::size_t>(dim) * static_cast<std::size_t>(dim);
  if (a_mat.size() != dd || a_prime_mat.size() != dd ||
      m0.size() != static_cast<std::size_t>(dim)) {
    throw ParameterError("engine: stable_ou_mean_flow size mismatch");
  }
  std::vector<double> s(dd);
  for (std::size_t i = 0; i < dd; ++i) s[i] = a_mat[i] + a_prime_mat[i];

  MeasureFlow flow;
  flow.rep = MeasureFlow::Rep::MeanOnly;
  flow.dim = dim;
  flow.means.resize(grid->num_nodes() * static_cast<std::size_t>(dim));
  for (std::size_t k = 0; k < grid->num_nodes(); ++k) {
    std::vector<double> st(s);
    for (auto& v : st) v *= grid->node(k);
    const auto e = matrix_exponential(std::move(st), dim);
    for (int i = 0; i < dim; ++i) {
      double acc = 0.0;
      for (int j = 0; j < dim; ++j) {
        acc += e[static_cast<std::size_t>(i * dim + j)] * m0[static_cast<std::size_t>(j)];
      }
      flow.means[k * static_cast<std::size_t>(dim) + static_cast<std::size_t>(i)] = acc;
    }
  }
  flow.grid = std::move(grid);
  flow.validate();
  return flow;
}

}  // namespace mckv
