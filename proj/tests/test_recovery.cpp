#include <cstdint>
#include <vector>

#include "doctest.h"
#include "ftsim/checkpoint.hpp"
#include "ftsim/errors.hpp"
#include "ftsim/problem.hpp"
#include "ftsim/recovery.hpp"
#include "ftsim/solver.hpp"
#include "ftsim/world.hpp"
#include "oracles.hpp"

using namespace ftsim;

namespace {

// Everything a protected run needs, wired together with a per-step snapshot
// cadence. Tests drive `solve()` and inspect the pieces afterwards.
struct Rig {
  World world;
  CheckpointService svc;
  Problem prob;
  DistributedSolver solver;
  RecoveryCoordinator rc;
  DistributedSolver::Hooks hooks;

  // n=6 runs three outer steps at these solver settings, so injections at
  // outer step 1 land mid-run instead of after convergence
  Rig(int p, int spares, RecoveryStrategy strat, bool fallback, int n = 6,
      int redundancy = 1)
      : world(make_cfg(p, spares)),
        svc(world, redundancy),
        prob(make_poisson27(n)),
        solver(world, svc, make_scfg(), prob),
        rc(world, svc, solver, strat, fallback) {
    svc.push(Category::Checkpoint, SnapshotKind::Static, 0,
             [this](Rank r) { return solver.payload_static(r); });
    hooks.after_outer_step = [this](std::int64_t t) {
      svc.push(Category::Checkpoint, SnapshotKind::Dynamic, t,
               [this](Rank r) { return solver.payload_dynamic(r); });
    };
  }

  static WorldConfig make_cfg(int p, int spares) {
    WorldConfig cfg;
    cfg.processes = p;
    cfg.spares = spares;
    cfg.cores_per_node = 16;
    cfg.detection_timeout_s = 0.001;
    return cfg;
  }

  static SolverConfig make_scfg() {
    SolverConfig s;
    s.tol = 1e-8;
    s.m_inner = 5;
    s.m_outer = 10;
    s.max_outer = 200;
    return s;
  }

  SolveStats solve() {
    while (true) {
      try {
        return solver.run(hooks);
      } catch (const ProcFailed&) {
        rc.recover();
      }
    }
  }
};

}  // namespace

TEST_CASE("shrink round: report fields and charged buckets line up") {
  Rig rig(4, 0, RecoveryStrategy::Shrink, false);
  FaultPlan plan;
  plan.injections.push_back(FaultInjection{3, 1, 2});
  rig.world.arm(plan);

  SolveStats stats;
  RecoveryReport rep;
  OverheadBreakdown before, after;
  while (true) {
    try {
      stats = rig.solver.run(rig.hooks);
      break;
    } catch (const ProcFailed& pf) {
      CHECK(pf.observed() == std::vector<ProcId>{3});
      before = rig.world.breakdown();
      rep = rig.rc.recover();
      after = rig.world.breakdown();
    }
  }

  CHECK(rep.failed == std::vector<ProcId>{3});
  CHECK(rep.applied == RecoveryStrategy::Shrink);
  CHECK(!rep.fell_back);
  CHECK(rep.resume_tag == 0);  // tag 0 pushed after step 0, death in step 1
  CHECK(rep.ranks_after == 3);
  CHECK(rep.stitched.empty());
  CHECK(rep.t_detect == after.t_pfd - before.t_pfd);
  CHECK(rep.t_reconfig == after.t_pfr - before.t_pfr);
  CHECK(rep.t_restore == after.t_pfx - before.t_pfx);
  CHECK(rep.t_detect > 0.0);
  CHECK(rep.t_reconfig > 0.0);
  CHECK(rep.t_restore > 0.0);

  REQUIRE(stats.converged);
  CHECK(rig.solver.nranks() == 3);
  auto lu = oracle::lu_solve(oracle::stencil_poisson27(6));
  CHECK(oracle::rel_norm_diff(rig.solver.gather_solution(), lu) < 1e-7);
}

TEST_CASE("substitute round: spare stitched into the failed slot") {
  Rig rig(4, 2, RecoveryStrategy::Substitute, false);
  FaultPlan plan;
  plan.injections.push_back(FaultInjection{1, 1, 3});
  rig.world.arm(plan);

  SolveStats stats;
  RecoveryReport rep;
  while (true) {
    try {
      stats = rig.solver.run(rig.hooks);
      break;
    } catch (const ProcFailed&) {
      rep = rig.rc.recover();
    }
  }

  CHECK(rep.applied == RecoveryStrategy::Substitute);
  CHECK(rep.failed == std::vector<ProcId>{1});
  CHECK(rep.ranks_after == 4);
  REQUIRE(rep.stitched.size() == 1);
  CHECK(rep.stitched[0].first == 1);   // slot kept its rank
  CHECK(rep.stitched[0].second == 4);  // first spare pid
  CHECK(rig.world.comm().pid_of(1) == 4);
  CHECK(rig.world.comm().size() == 4);

  REQUIRE(stats.converged);
  auto lu = oracle::lu_solve(oracle::stencil_poisson27(6));
  CHECK(oracle::rel_norm_diff(rig.solver.gather_solution(), lu) < 1e-7);
}

TEST_CASE("recovery re-establishes replica coverage on the new membership") {
  SUBCASE("after shrink") {
    Rig rig(4, 0, RecoveryStrategy::Shrink, false, 6, 2);
    FaultPlan plan;
    plan.injections.push_back(FaultInjection{2, 1, 1});
    rig.world.arm(plan);
    RecoveryReport rep;
    bool repaired = false;
    while (!repaired) {
      try {
        rig.solver.run(rig.hooks);
        break;
      } catch (const ProcFailed&) {
        rep = rig.rc.recover();
        repaired = true;
      }
    }
    REQUIRE(repaired);
    const auto& comm = rig.world.comm();
    const int p = comm.size();
    for (Rank r = 0; r < p; ++r) {
      const ProcId owner = comm.pid_of(r);
      CAPTURE(r);
      CHECK(rig.svc.peek(owner, owner, SnapshotKind::Static) != nullptr);
      for (Rank b : buddy_set(r, p, rig.svc.redundancy())) {
        const ProcId host = comm.pid_of(b);
        const Snapshot* st = rig.svc.peek(host, owner, SnapshotKind::Static);
        const Snapshot* dy = rig.svc.peek(host, owner, SnapshotKind::Dynamic);
        CAPTURE(b);
        REQUIRE(st != nullptr);
        REQUIRE(dy != nullptr);
        CHECK(dy->tag == rep.resume_tag);
        CHECK(dy->epoch == rig.world.comm().epoch);
      }
    }
  }

  SUBCASE("after substitute the spare's store is populated") {
    Rig rig(4, 1, RecoveryStrategy::Substitute, false, 6, 1);
    FaultPlan plan;
    plan.injections.push_back(FaultInjection{2, 1, 1});
    rig.world.arm(plan);
    RecoveryReport rep;
    bool repaired = false;
    while (!repaired) {
      try {
        rig.solver.run(rig.hooks);
        break;
      } catch (const ProcFailed&) {
        rep = rig.rc.recover();
        repaired = true;
      }
    }
    REQUIRE(repaired);
    const auto& comm = rig.world.comm();
    for (Rank r = 0; r < comm.size(); ++r) {
      const ProcId owner = comm.pid_of(r);
      CAPTURE(r);
      // every owner, including the stitched spare, holds its own copies and
      // a replica at its buddy rank
      CHECK(rig.svc.peek(owner, owner, SnapshotKind::Static) != nullptr);
      const Snapshot* own_dy = rig.svc.peek(owner, owner, SnapshotKind::Dynamic);
      REQUIRE(own_dy != nullptr);
      CHECK(own_dy->tag == rep.resume_tag);
      for (Rank b : buddy_set(r, comm.size(), 1)) {
        const ProcId host = comm.pid_of(b);
        CHECK(rig.svc.peek(host, owner, SnapshotKind::Static) != nullptr);
        const Snapshot* dy = rig.svc.peek(host, owner, SnapshotKind::Dynamic);
        REQUIRE(dy != nullptr);
        CHECK(dy->tag == rep.resume_tag);
      }
    }
  }
}

TEST_CASE("substitute falls back to shrink when the spare pool is empty") {
  Rig rig(4, 0, RecoveryStrategy::Substitute, true);
  FaultPlan plan;
  plan.injections.push_back(FaultInjection{0, 1, 0});
  rig.world.arm(plan);

  SolveStats stats;
  RecoveryReport rep;
  while (true) {
    try {
      stats = rig.solver.run(rig.hooks);
      break;
    } catch (const ProcFailed&) {
      rep = rig.rc.recover();
    }
  }
  CHECK(rep.applied == RecoveryStrategy::Shrink);
  CHECK(rep.fell_back);
  CHECK(rep.ranks_after == 3);
  CHECK(stats.converged);
}

TEST_CASE("substitute without fallback dies loudly when spares run out") {
  Rig rig(4, 1, RecoveryStrategy::Substitute, false);
  FaultPlan plan;
  plan.injections.push_back(FaultInjection{0, 1, 0});
  plan.injections.push_back(FaultInjection{3, 2, 0});  // last step of a 3-step run
  rig.world.arm(plan);
  CHECK_THROWS_WITH_AS(rig.solve(), doctest::Contains("spares exhausted"),
                       UnrecoverableError);
}

TEST_CASE("death before the first snapshot restarts the solve from scratch") {
  Rig rig(4, 0, RecoveryStrategy::Shrink, false);
  FaultPlan plan;
  plan.injections.push_back(FaultInjection{1, 0, 2});  // inside the first step
  rig.world.arm(plan);

  SolveStats stats;
  RecoveryReport rep;
  while (true) {
    try {
      stats = rig.solver.run(rig.hooks);
      break;
    } catch (const ProcFailed&) {
      rep = rig.rc.recover();
    }
  }
  CHECK(rep.resume_tag == kNoTag);
  REQUIRE(stats.converged);
  // the whole prefix was redone, and the post-restart tag-0 push committed
  // cleanly because stale state snapshots were purged
  CHECK(stats.executed_inner > stats.inner_iterations);
  auto lu = oracle::lu_solve(oracle::stencil_poisson27(6));
  CHECK(oracle::rel_norm_diff(rig.solver.gather_solution(), lu) < 1e-7);
}

TEST_CASE("two separated failures trigger two repair rounds") {
  // n=8 runs five outer steps, leaving room for the second kill at step 3
  SUBCASE("shrink twice") {
    Rig rig(6, 0, RecoveryStrategy::Shrink, false, 8);
    FaultPlan plan;
    plan.injections.push_back(FaultInjection{5, 1, 1});
    plan.injections.push_back(FaultInjection{4, 3, 1});
    rig.world.arm(plan);
    SolveStats stats = rig.solve();
    REQUIRE(stats.converged);
    REQUIRE(rig.rc.rounds().size() == 2);
    CHECK(rig.rc.rounds()[0].ranks_after == 5);
    CHECK(rig.rc.rounds()[1].ranks_after == 4);
    CHECK(rig.solver.nranks() == 4);
    auto lu = oracle::lu_solve(oracle::stencil_poisson27(8));
    CHECK(oracle::rel_norm_diff(rig.solver.gather_solution(), lu) < 1e-7);
  }

  SUBCASE("substitute twice consumes two spares") {
    Rig rig(6, 2, RecoveryStrategy::Substitute, false, 8);
    FaultPlan plan;
    plan.injections.push_back(FaultInjection{5, 1, 1});
    plan.injections.push_back(FaultInjection{0, 3, 1});
    rig.world.arm(plan);
    SolveStats stats = rig.solve();
    REQUIRE(stats.converged);
    REQUIRE(rig.rc.rounds().size() == 2);
    CHECK(rig.rc.rounds()[0].stitched.size() == 1);
    CHECK(rig.rc.rounds()[1].stitched.size() == 1);
    CHECK(rig.rc.rounds()[0].stitched[0].second == 6);
    CHECK(rig.rc.rounds()[1].stitched[0].second == 7);
    CHECK(rig.solver.nranks() == 6);
    CHECK(rig.world.comm().pid_of(5) == 6);
    CHECK(rig.world.comm().pid_of(0) == 7);
  }
}

TEST_CASE("simultaneous failures beyond the replica count are unrecoverable") {
  // adjacent deaths wipe every copy of rank 2's rows; injected directly since
  // a validated plan caps same-window deaths at the replica count
  Rig rig(4, 0, RecoveryStrategy::Shrink, false);
  bool hit = false;
  rig.hooks.after_outer_step = [&](std::int64_t t) {
    rig.svc.push(Category::Checkpoint, SnapshotKind::Dynamic, t,
                 [&](Rank r) { return rig.solver.payload_dynamic(r); });
    if (t == 0 && !hit) {
      hit = true;
      rig.world.kill(2);
      rig.world.kill(3);
    }
  };
  CHECK_THROWS_WITH_AS(rig.solve(), doctest::Contains("unrecoverable"),
                       UnrecoverableError);
}
