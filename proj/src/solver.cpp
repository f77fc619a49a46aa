#include "ortree/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "ortree/analysis.hpp"

namespace ortree {

namespace {

constexpr std::size_t kBatch = 64; // expansion batch size; fixed so results never depend on worker count
constexpr double kTiny = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

} // namespace

void SolverConfig::validate() const {
    if (depth < 1 || depth > 20) fail("depth must lie in [1, 20]");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail("lambda must be finite and non-negative");
    if (rel_gap < 0.0 && abs_gap < 0.0) fail("at least one gap tolerance must be enabled");
    if (rel_gap >= 0.0 && !(rel_gap > 0.0)) fail("relative gap tolerance must be positive");
    if (!(time_limit_s > 0.0)) fail("time limit must be positive");
    if (node_limit == 0) fail("node limit must be positive");
    if (workers < 1 || workers > 1024) fail("workers must lie in [1, 1024]");
    if (upper_stride < 1) fail("completion stride must be positive");
}

const char* stop_reason_name(StopReason r) {
    switch (r) {
    case StopReason::gap: return "gap";
    case StopReason::time: return "time";
    case StopReason::nodes: return "nodes";
    case StopReason::exhausted: return "exhausted";
    }
    return "unknown";
}

namespace {

// Sample routing induced by the already-fixed part of a region: each sample
// either lands in a deepest-internal-level bucket or stops at an open node.
struct Partition {
    std::vector<std::vector<std::uint32_t>> bucket; // frontier node ff+k at [k]
    std::vector<std::uint8_t> determined;           // all ancestors resolved
    std::vector<std::uint8_t> leaf_only;            // parent fixed inactive
    int fixed1 = 0;
};

Partition partition_samples(const Region& r, const Dataset& ds) {
    TreeShape sh(r.depth);
    int ff = sh.first_frontier();
    Partition part;
    part.bucket.resize(static_cast<std::size_t>(ff));
    part.determined.resize(static_cast<std::size_t>(ff));
    part.leaf_only.assign(static_cast<std::size_t>(ff), 0);

    enum : int { kOpen, kRight, kCompare };
    struct Step {
        int kind = kOpen;
        const double* col = nullptr;
        double thr = 0.0;
    };
    std::vector<Step> plan(static_cast<std::size_t>(ff));
    for (int t = 1; t < ff; ++t) {
        const NodeDomain& nd = r.node(t);
        Step& s = plan[static_cast<std::size_t>(t)];
        if (nd.d == DState::fixed0) {
            s.kind = kRight;
        } else if (nd.d == DState::fixed1 && nd.resolved()) {
            s.kind = kCompare;
            int j = nd.features[0];
            s.col = ds.cols[static_cast<std::size_t>(j)].data();
            s.thr = ds.sorted_values[static_cast<std::size_t>(j)][static_cast<std::size_t>(nd.win_lo)];
        }
        if (nd.d == DState::fixed1) ++part.fixed1;
    }
    for (int k = 0; k < ff; ++k) {
        part.determined[static_cast<std::size_t>(k)] = frontier_determined(r, ff + k) ? 1 : 0;
        int par = TreeShape::parent(ff + k);
        part.leaf_only[static_cast<std::size_t>(k)] =
            (par >= 1 && r.node(par).d == DState::fixed0) ? 1 : 0;
    }

    for (std::uint32_t i = 0; i < ds.n; ++i) {
        int t = 1;
        while (t < ff) {
            const Step& s = plan[static_cast<std::size_t>(t)];
            if (s.kind == kOpen) {
                t = -1;
                break;
            }
            if (s.kind == kRight)
                t = TreeShape::right(t);
            else
                t = s.col[i] < s.thr ? TreeShape::left(t) : TreeShape::right(t);
        }
        if (t > 0) part.bucket[static_cast<std::size_t>(t - ff)].push_back(i);
    }
    return part;
}

struct RegionEval {
    double beta = 0.0;
    double alpha = kInf;
    bool terminal = false;
    bool has_tree = false;
    TreeStructure tree;
};

// Assemble the unique structure of a terminal region: fixed upper splits plus
// the closed-form frontier choices.
TreeStructure assemble_terminal(const Region& r, const Dataset& ds,
                                const std::vector<FrontierChoice>& choice,
                                const Partition& part) {
    TreeShape sh(r.depth);
    int ff = sh.first_frontier();
    TreeStructure tree = TreeStructure::all_inactive(r.depth);
    for (int t = 1; t < ff; ++t) {
        const NodeDomain& nd = r.node(t);
        if (nd.d != DState::fixed1) continue;
        SplitNode& sn = tree.node(t);
        sn.active = true;
        sn.feature = nd.features[0];
        sn.threshold_index = nd.win_lo;
        sn.threshold =
            ds.sorted_values[static_cast<std::size_t>(sn.feature)][static_cast<std::size_t>(nd.win_lo)];
    }
    for (int k = 0; k < ff; ++k) {
        if (!part.determined[static_cast<std::size_t>(k)]) continue;
        const FrontierChoice& fc = choice[static_cast<std::size_t>(k)];
        if (!fc.split) continue;
        SplitNode& sn = tree.node(ff + k);
        sn.active = true;
        sn.feature = fc.candidate.feature;
        sn.threshold = fc.candidate.threshold;
        sn.threshold_index = fc.candidate.threshold_index;
    }
    fit_leaf_means(tree, ds);
    return tree;
}

// Greedy in-box completion: region-fixed parts are honored, free activity is
// decided like CART, open feature/threshold choices take the best gain.
TreeStructure greedy_complete(const Region& r, const Dataset& ds, const SolverConfig& cfg,
                              SplitScratch& scratch) {
    TreeShape sh(r.depth);
    int ff = sh.first_frontier();
    TreeStructure tree = TreeStructure::all_inactive(r.depth);

    std::vector<std::vector<std::uint32_t>> bucket(static_cast<std::size_t>(sh.internal_count()) + 1);
    std::vector<std::uint8_t> dead(static_cast<std::size_t>(sh.internal_count()) + 1, 0);
    bucket[1].resize(ds.n);
    std::iota(bucket[1].begin(), bucket[1].end(), 0u);

    for (int t = 1; t < ff; ++t) {
        const NodeDomain& nd = r.node(t);
        auto& S = bucket[static_cast<std::size_t>(t)];
        bool active = false;
        int feature = -1;
        double threshold = 0.0;
        int threshold_index = -1;

        if (!dead[static_cast<std::size_t>(t)]) {
            if (nd.d == DState::fixed1) {
                std::optional<SplitCandidate> cand;
                if (nd.feature_fixed()) {
                    cand = best_depth1_split_windowed(ds, S, nd.features[0], nd.win_lo, nd.win_hi,
                                                      scratch);
                    if (!cand) { // forced active: fall back to the window edge
                        feature = nd.features[0];
                        threshold_index = nd.win_lo;
                        threshold = ds.sorted_values[static_cast<std::size_t>(feature)]
                                                    [static_cast<std::size_t>(nd.win_lo)];
                    }
                } else {
                    cand = best_depth1_split(ds, S, nd.features, scratch);
                    if (!cand) {
                        feature = nd.features[0];
                        threshold_index = 0;
                        threshold = ds.sorted_values[static_cast<std::size_t>(feature)][0];
                    }
                }
                if (cand) {
                    feature = cand->feature;
                    threshold = cand->threshold;
                    threshold_index = cand->threshold_index;
                }
                active = true;
            } else if (nd.d == DState::free_) {
                auto cand = best_depth1_split(ds, S, nd.features, scratch);
                if (cand &&
                    accept_split(cand->gain, S.size(), cfg.lambda, ds.baseline_sse, cfg.rule)) {
                    active = true;
                    feature = cand->feature;
                    threshold = cand->threshold;
                    threshold_index = cand->threshold_index;
                }
            }
        }

        int lc = TreeShape::left(t), rc = TreeShape::right(t);
        if (active) {
            SplitNode& sn = tree.node(t);
            sn.active = true;
            sn.feature = feature;
            sn.threshold = threshold;
            sn.threshold_index = threshold_index;
            const auto& col = ds.cols[static_cast<std::size_t>(feature)];
            for (std::uint32_t i : S)
                (col[i] < threshold ? bucket[static_cast<std::size_t>(lc)]
                                    : bucket[static_cast<std::size_t>(rc)])
                    .push_back(i);
        } else {
            bucket[static_cast<std::size_t>(rc)] = std::move(S);
            dead[static_cast<std::size_t>(lc)] = 1;
            dead[static_cast<std::size_t>(rc)] = 1;
        }
        if (dead[static_cast<std::size_t>(t)]) {
            dead[static_cast<std::size_t>(lc)] = 1;
            dead[static_cast<std::size_t>(rc)] = 1;
        }
    }

    for (int t = ff; t <= sh.internal_count(); ++t) {
        if (dead[static_cast<std::size_t>(t)]) continue;
        auto& S = bucket[static_cast<std::size_t>(t)];
        if (S.empty()) continue;
        FrontierChoice fc = resolve_frontier(ds, S, cfg.lambda, cfg.rule, scratch);
        if (fc.split) {
            SplitNode& sn = tree.node(t);
            sn.active = true;
            sn.feature = fc.candidate.feature;
            sn.threshold = fc.candidate.threshold;
            sn.threshold_index = fc.candidate.threshold_index;
        }
    }
    fit_leaf_means(tree, ds);
    return tree;
}

RegionEval evaluate_region(const Region& r, const Dataset& ds, const SolverConfig& cfg,
                           SplitScratch& scratch, bool want_completion) {
    RegionEval ev;
    Partition part = partition_samples(r, ds);
    ev.terminal = region_terminal(r);

    double beta = cfg.lambda * part.fixed1;
    std::vector<FrontierChoice> choice(part.bucket.size());
    for (std::size_t k = 0; k < part.bucket.size(); ++k) {
        if (!part.determined[k] || part.bucket[k].empty()) continue;
        if (part.leaf_only[k]) {
            choice[k].sse = subset_sse(ds, part.bucket[k]);
            choice[k].value = choice[k].sse / ds.baseline_sse;
        } else {
            choice[k] = resolve_frontier(ds, part.bucket[k], cfg.lambda, cfg.rule, scratch);
        }
        beta += choice[k].value;
    }
    ev.beta = beta;

    if (ev.terminal) {
        // Exact: both bounds are the resolved structure's value, computed once.
        ev.alpha = beta;
        ev.tree = assemble_terminal(r, ds, choice, part);
        ev.has_tree = true;
    } else if (want_completion) {
        ev.tree = greedy_complete(r, ds, cfg, scratch);
        ev.alpha = evaluate(ev.tree, ds, cfg.lambda).objective;
        ev.has_tree = true;
    }
    return ev;
}

// Fixed-size thread pool; the calling thread works too. Work items are
// claimed by index, so output slots are disjoint and merge order is fixed.
class WorkerPool {
  public:
    explicit WorkerPool(int workers) {
        for (int w = 1; w < workers; ++w)
            threads_.emplace_back([this, w] { loop(w); });
    }
    ~WorkerPool() {
        {
            std::lock_guard<std::mutex> lk(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    void run(std::size_t count, const std::function<void(std::size_t, int)>& fn) {
        if (count == 0) return;
        {
            std::lock_guard<std::mutex> lk(mu_);
            fn_ = &fn;
            count_ = count;
            next_ = 0;
            pending_ = count;
            ++gen_;
        }
        cv_.notify_all();
        work(0);
        std::unique_lock<std::mutex> lk(mu_);
        done_cv_.wait(lk, [this] { return pending_ == 0; });
        fn_ = nullptr;
    }

  private:
    void loop(int id) {
        std::uint64_t seen = 0;
        for (;;) {
            {
                std::unique_lock<std::mutex> lk(mu_);
                cv_.wait(lk, [&] { return stop_ || gen_ != seen; });
                if (stop_) return;
                seen = gen_;
            }
            work(id);
        }
    }
    void work(int id) {
        for (;;) {
            std::size_t i;
            const std::function<void(std::size_t, int)>* fn;
            {
                std::lock_guard<std::mutex> lk(mu_);
                if (next_ >= count_) return;
                i = next_++;
                fn = fn_;
            }
            (*fn)(i, id);
            std::lock_guard<std::mutex> lk(mu_);
            if (--pending_ == 0) done_cv_.notify_all();
        }
    }

    std::vector<std::thread> threads_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    const std::function<void(std::size_t, int)>* fn_ = nullptr;
    std::size_t count_ = 0;
    std::size_t next_ = 0;
    std::size_t pending_ = 0;
    std::uint64_t gen_ = 0;
    bool stop_ = false;
};

struct QEntry {
    double beta = 0.0;
    std::uint64_t seq = 0;
    Region region;
};

struct QCompare { // min-heap on (beta, seq)
    bool operator()(const QEntry& a, const QEntry& b) const {
        if (a.beta != b.beta) return a.beta > b.beta;
        return a.seq > b.seq;
    }
};

struct ExpandedChild {
    Region region;
    RegionEval eval;
};

} // namespace

double lower_bound(const Region& r, const Dataset& ds, const SolverConfig& cfg,
                   SplitScratch& scratch) {
    return evaluate_region(r, ds, cfg, scratch, false).beta;
}

Completion upper_bound(const Region& r, const Dataset& ds, const SolverConfig& cfg,
                       SplitScratch& scratch) {
    RegionEval ev = evaluate_region(r, ds, cfg, scratch, true);
    return {std::move(ev.tree), ev.alpha};
}

SolverReport solve(const Dataset& ds, const SolverConfig& cfg) {
    cfg.validate();
    auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&t0] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    SolverReport rep;
    TreeStructure inc_tree;
    double inc_alpha = kInf;
    bool have_inc = false;
    auto offer = [&](const TreeStructure& t, double a) {
        if (!have_inc || a < inc_alpha || (a == inc_alpha && lex_less(t, inc_tree))) {
            inc_tree = t;
            inc_alpha = a;
            have_inc = true;
        }
    };

    std::vector<SplitScratch> scratch(static_cast<std::size_t>(cfg.workers));

    if (cfg.warm_start) {
        TreeStructure cart = fit_cart(ds, cfg.depth, cfg.lambda, cfg.rule);
        offer(cart, evaluate(cart, ds, cfg.lambda).objective);
    }

    Region root = root_region(ds, cfg.depth);
    RegionEval root_ev = evaluate_region(root, ds, cfg, scratch[0], true);
    offer(root_ev.tree, root_ev.alpha);

    std::vector<QEntry> heap;
    std::uint64_t seq_counter = 0;
    auto push_region = [&](Region&& r, double beta) {
        QEntry e;
        e.beta = beta;
        e.seq = seq_counter++;
        e.region = std::move(r);
        e.region.beta = beta;
        e.region.seq = e.seq;
        heap.push_back(std::move(e));
        std::push_heap(heap.begin(), heap.end(), QCompare{});
    };

    if (root_ev.terminal) {
        ++rep.fathomed;
    } else if (root_ev.beta >= inc_alpha) {
        ++rep.pruned;
    } else {
        root.alpha = root_ev.alpha;
        push_region(std::move(root), root_ev.beta);
    }

    double beta_trace = heap.empty() ? inc_alpha : std::min(inc_alpha, heap.front().beta);
    auto gap_of = [](double a, double b) { return (a - b) / std::max(a, kTiny); };
    auto record = [&] {
        rep.trace.push_back(
            {elapsed(), inc_alpha, beta_trace, gap_of(inc_alpha, beta_trace), heap.size()});
    };
    record();

    WorkerPool pool(cfg.workers);
    StopReason reason = StopReason::exhausted;

    for (;;) {
        double gap = gap_of(inc_alpha, beta_trace);
        if (cfg.rel_gap >= 0.0 && gap <= cfg.rel_gap) {
            reason = StopReason::gap;
            break;
        }
        if (cfg.abs_gap >= 0.0 && inc_alpha - beta_trace <= cfg.abs_gap) {
            reason = StopReason::gap;
            break;
        }
        if (heap.empty()) {
            reason = StopReason::exhausted;
            beta_trace = inc_alpha;
            record();
            break;
        }
        if (rep.explored >= cfg.node_limit) {
            reason = StopReason::nodes;
            break;
        }
        if (elapsed() >= cfg.time_limit_s) {
            reason = StopReason::time;
            break;
        }

        std::vector<QEntry> batch;
        while (!heap.empty() && batch.size() < kBatch) {
            std::pop_heap(heap.begin(), heap.end(), QCompare{});
            QEntry e = std::move(heap.back());
            heap.pop_back();
            if (e.beta >= inc_alpha) {
                ++rep.pruned;
                continue;
            }
            batch.push_back(std::move(e));
        }
        if (batch.empty()) continue; // queue drained by pruning; next pass reports exhaustion

        std::uint64_t explored_base = rep.explored;
        rep.explored += batch.size();

        std::vector<std::vector<ExpandedChild>> results(batch.size());
        pool.run(batch.size(), [&](std::size_t i, int tid) {
            bool want_completion =
                ((explored_base + i) % static_cast<std::uint64_t>(cfg.upper_stride)) == 0;
            BranchDecision dec = next_branch(batch[i].region, ds);
            auto children = apply_branch(batch[i].region, dec, ds);
            auto& out = results[i];
            out.reserve(children.size());
            for (auto& child : children) {
                ExpandedChild ec;
                ec.eval = evaluate_region(child, ds, cfg, scratch[static_cast<std::size_t>(tid)],
                                          want_completion);
                ec.region = std::move(child);
                out.push_back(std::move(ec));
            }
        });

        for (auto& children : results) {
            for (auto& ec : children) {
                if (ec.eval.has_tree) offer(ec.eval.tree, ec.eval.alpha);
                if (ec.eval.terminal) {
                    ++rep.fathomed;
                } else if (ec.eval.beta >= inc_alpha) {
                    ++rep.pruned;
                } else {
                    ec.region.alpha = ec.eval.alpha;
                    push_region(std::move(ec.region), ec.eval.beta);
                }
            }
        }

        double beta_now = heap.empty() ? inc_alpha : std::min(inc_alpha, heap.front().beta);
        beta_trace = std::max(beta_trace, beta_now); // certified bound is cumulative
        record();
    }

    rep.reason = reason;
    rep.tree = inc_tree;
    rep.alpha = inc_alpha;
    rep.beta = beta_trace;
    rep.gap = gap_of(inc_alpha, beta_trace);
    rep.wall_time_s = elapsed();
    if (rep.trace.empty() || rep.trace.back().beta != beta_trace ||
        rep.trace.back().alpha != inc_alpha)
        record();
    return rep;
}

namespace {

struct OracleState {
    const Dataset& ds;
    const SolverConfig& cfg;
    SplitScratch scratch;
    TreeShape sh;
    int ff;
    std::vector<std::vector<std::uint32_t>> bucket; // by internal node index
    std::vector<std::uint8_t> dead;
    TreeStructure work;
    std::uint64_t structures = 0;
    double best = kInf;
    TreeStructure best_tree;
    bool have_best = false;

    OracleState(const Dataset& d, const SolverConfig& c)
        : ds(d), cfg(c), sh(c.depth), ff(sh.first_frontier()),
          bucket(static_cast<std::size_t>(sh.internal_count()) + 1),
          dead(static_cast<std::size_t>(sh.internal_count()) + 1, 0),
          work(TreeStructure::all_inactive(c.depth)) {}

    void complete(int active_upper) {
        ++structures;
        double value = cfg.lambda * active_upper;
        std::vector<FrontierChoice> choice(static_cast<std::size_t>(ff));
        for (int t = ff; t < 2 * ff; ++t) {
            auto& S = bucket[static_cast<std::size_t>(t)];
            if (S.empty()) continue;
            FrontierChoice& fc = choice[static_cast<std::size_t>(t - ff)];
            if (dead[static_cast<std::size_t>(t)]) {
                fc.sse = subset_sse(ds, S);
                fc.value = fc.sse / ds.baseline_sse;
            } else {
                fc = resolve_frontier(ds, S, cfg.lambda, cfg.rule, scratch);
            }
            value += fc.value;
        }
        if (value < best) {
            best = value;
            best_tree = work;
            for (int t = ff; t < 2 * ff; ++t) {
                const FrontierChoice& fc = choice[static_cast<std::size_t>(t - ff)];
                SplitNode& sn = best_tree.node(t);
                if (fc.split) {
                    sn.active = true;
                    sn.feature = fc.candidate.feature;
                    sn.threshold = fc.candidate.threshold;
                    sn.threshold_index = fc.candidate.threshold_index;
                } else {
                    sn = SplitNode{};
                }
            }
            have_best = true;
        }
    }

    void enumerate(int t, int active_upper) {
        if (t == ff) {
            complete(active_upper);
            return;
        }
        int lc = TreeShape::left(t), rc = TreeShape::right(t);
        auto& S = bucket[static_cast<std::size_t>(t)];

        // Option: inactive, subtree dies, samples flow right.
        work.node(t) = SplitNode{};
        bucket[static_cast<std::size_t>(lc)].clear();
        bucket[static_cast<std::size_t>(rc)] = S;
        dead[static_cast<std::size_t>(lc)] = 1;
        dead[static_cast<std::size_t>(rc)] = 1;
        enumerate(t + 1, active_upper);

        if (dead[static_cast<std::size_t>(t)]) return;

        // Options: every separating (feature, threshold) over this bucket.
        auto usable = ds.usable_features();
        for (int j : usable) {
            const auto& ord = ds.order[static_cast<std::size_t>(j)];
            const auto& col = ds.cols[static_cast<std::size_t>(j)];
            scratch.ensure(ds.n);
            for (std::uint32_t i : S) scratch.mark[i] = 1;
            std::vector<double> cuts;
            bool seen = false;
            double run = 0.0;
            for (std::uint32_t i : ord) {
                if (!scratch.mark[i]) continue;
                if (!seen) {
                    seen = true;
                    run = col[i];
                } else if (col[i] != run) {
                    cuts.push_back(col[i]);
                    run = col[i];
                }
            }
            for (std::uint32_t i : S) scratch.mark[i] = 0;

            const auto& vals = ds.sorted_values[static_cast<std::size_t>(j)];
            for (double v : cuts) {
                SplitNode& sn = work.node(t);
                sn.active = true;
                sn.feature = j;
                sn.threshold = v;
                sn.threshold_index = static_cast<int>(
                    std::lower_bound(vals.begin(), vals.end(), v) - vals.begin());
                auto& L = bucket[static_cast<std::size_t>(lc)];
                auto& R = bucket[static_cast<std::size_t>(rc)];
                L.clear();
                R.clear();
                for (std::uint32_t i : S) (col[i] < v ? L : R).push_back(i);
                dead[static_cast<std::size_t>(lc)] = 0;
                dead[static_cast<std::size_t>(rc)] = 0;
                enumerate(t + 1, active_upper + 1);
            }
        }
        work.node(t) = SplitNode{};
    }
};

} // namespace

OracleResult verify_oracle(const Dataset& ds, const SolverConfig& cfg, std::uint64_t cap) {
    cfg.validate();
    if (branchable_bound_exceeds(ds.n, ds.p, cfg.depth, cap))
        fail("instance too large for exhaustive verification (structure bound exceeds " +
             std::to_string(cap) + ")");

    OracleState st(ds, cfg);
    st.bucket[1].resize(ds.n);
    std::iota(st.bucket[1].begin(), st.bucket[1].end(), 0u);
    st.enumerate(1, 0);

    if (!st.have_best) fail("exhaustive verification found no structure"); // unreachable: all-inactive always exists
    fit_leaf_means(st.best_tree, ds);
    OracleResult out;
    out.objective = st.best;
    out.tree = std::move(st.best_tree);
    out.structures = st.structures;
    return out;
}

} // namespace ortree
