#pragma once

#include "qtm/env/environment.hpp"

namespace qtm::env {

/// Flux-qubit refrigerator: both baths always coupled, continuous control only.
inline EnvConfig qubit_refrigerator_preset() {
  EnvConfig c;
  c.kind = MachineKind::Refrigerator;
  c.model = sim::QubitModel::with_resonances(1.0, 0.12, 1.0, 4.0, 10.0 / 3.0, 20.0 / 3.0);
  c.u_min = 0.0;
  c.u_max = 0.75;
  c.history_length = 128;
  c.dt = 0.98;
  c.gamma = 0.997;
  c.P0 = 6.62e-4;
  c.Sigma0 = 0.037;
  c.discrete = {Coupling::Both};
  c.penalty.enabled = false;
  return c;
}

/// Frequency-modulated oscillator engine with a Hot/Cold/None selector.
inline EnvConfig oscillator_engine_preset() {
  EnvConfig c;
  c.kind = MachineKind::HeatEngine;
  sim::OscillatorModel m;
  m.m = 1.0;
  m.w0 = 2.0;
  m[sim::Bath::Hot] = {0.6, 0.2};
  m[sim::Bath::Cold] = {0.6, 2.0};
  m.n_fock = 128;
  c.model = m;
  c.u_min = 0.5;
  c.u_max = 1.0;
  c.history_length = 128;
  c.dt = 0.2;
  c.gamma = 0.999;
  c.P0 = 0.175;
  c.Sigma0 = 0.525;
  c.discrete = {Coupling::Hot, Coupling::Cold, Coupling::None};
  c.penalty = {true, 25, 1.4, 128};
  c.positivity_every = 100;
  c.coherence_every = 0;
  return c;
}

}  // namespace qtm::env
