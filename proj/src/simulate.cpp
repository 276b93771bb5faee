#include "cmdp/simulate.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

namespace cmdp {

nlohmann::json RunTrace::to_json(const Model& m) const {
    nlohmann::json recs_j = nlohmann::json::array();
    for (const auto& r : recs) {
        recs_j.push_back({{"step", r.step},
                          {"state", m.render(r.state)},
                          {"mode", r.mode.str()},
                          {"red_taken", r.red_taken},
                          {"goal", r.goal}});
    }
    return {{"model", m.name()}, {"records", std::move(recs_j)}};
}

RunTrace sample_run(const Model& model, const Kernel& kernel, const StateKey& start,
                    std::uint64_t horizon, std::uint64_t seed) {
    RunTrace tr;
    tr.recs.reserve(horizon + 1);
    Rng rng = Rng::substream(seed, 0);
    StateKey s = start;
    Mode mode = kernel.initial_mode();
    tr.recs.push_back({0, s, mode, false, (model.labels(s) & label::kGoal) != 0});
    for (std::uint64_t t = 0; t < horizon; ++t) {
        StepOut out = step_kernel(model, kernel, mode, s, rng);
        s = out.edge.to;
        mode = out.mode;
        tr.recs.push_back({t + 1, s, mode, out.edge.red, (model.labels(s) & label::kGoal) != 0});
    }
    return tr;
}

Interval wilson_interval(std::uint64_t successes, std::uint64_t samples, double z) {
    if (samples == 0) return {0.0, 1.0};
    const double n = static_cast<double>(samples);
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (p + z2 / (2.0 * n)) / denom;
    const double spread = (z / denom) * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
    double lo = center - spread;
    double hi = center + spread;
    if (lo < 0.0) lo = 0.0;
    if (hi > 1.0) hi = 1.0;
    return {lo, hi};
}

Estimate make_estimate(std::uint64_t successes, std::uint64_t failures, std::uint64_t undecided) {
    Estimate e;
    e.successes = successes;
    e.failures = failures;
    e.undecided = undecided;
    e.samples = successes + failures + undecided;
    if (e.samples == 0) return e;
    const double n = static_cast<double>(e.samples);
    e.p_hat = static_cast<double>(successes) / n;
    e.wilson95 = wilson_interval(successes, e.samples, kZ95);
    e.wilson99 = wilson_interval(successes, e.samples, kZ99);
    e.p_hat_upper = static_cast<double>(successes + undecided) / n;
    e.upper95 = wilson_interval(successes + undecided, e.samples, kZ95);
    return e;
}

nlohmann::json Estimate::to_json() const {
    return {{"samples", samples},
            {"successes", successes},
            {"failures", failures},
            {"undecided", undecided},
            {"p_hat", p_hat},
            {"wilson95", {wilson95.lo, wilson95.hi}},
            {"wilson99", {wilson99.lo, wilson99.hi}},
            {"p_hat_upper", p_hat_upper},
            {"upper95", {upper95.lo, upper95.hi}}};
}

namespace {

void heartbeat(std::uint64_t done, std::uint64_t total, std::uint64_t succ, std::uint64_t fail) {
    std::fprintf(stderr, "  [mc] %llu/%llu samples (success %llu, failure %llu)\n",
                 static_cast<unsigned long long>(done), static_cast<unsigned long long>(total),
                 static_cast<unsigned long long>(succ), static_cast<unsigned long long>(fail));
}

}  // namespace

Estimate estimate_event(const Model& model, const Kernel& kernel, const StateKey& start,
                        const Monitor& monitor, const EventQuery& q) {
    std::uint64_t n_succ = 0, n_fail = 0, n_und = 0;
    const StateKey origin{};  // family None: marks the initial pseudo-transition
    Edge fast_buf[Model::kFastSucc];
    for (std::uint64_t i = 0; i < q.samples; ++i) {
        Rng rng = Rng::substream(q.seed, i);
        StateKey s = start;
        Mode mode = kernel.initial_mode();
        std::uint32_t obs = monitor.initial();
        obs = monitor.step(obs, Transition{origin, s, model.labels(s), false});
        Verdict v = monitor.verdict(obs);
        if (v == Verdict::Undecided && q.stop && q.stop(s)) v = monitor.at_end(obs);
        for (std::uint64_t t = 0; v == Verdict::Undecided && t < q.horizon; ++t) {
            Edge taken;
            Mode next;
            std::size_t nsucc = 0;
            if (model.fast_succ(s, fast_buf, &nsucc)) {
                std::size_t idx = 0;
                if (kernel.fast_pick(mode, s, fast_buf, nsucc, rng, &idx, &next)) {
                    taken = std::move(fast_buf[idx]);
                } else {
                    StepOut out = step_kernel(model, kernel, mode, s, rng);
                    taken = std::move(out.edge);
                    next = out.mode;
                }
            } else if (model.fast_sample(s, rng.next(), taken)) {
                next = kernel.observe(mode, s, taken);
            } else {
                StepOut out = step_kernel(model, kernel, mode, s, rng);
                taken = std::move(out.edge);
                next = out.mode;
            }
            if (q.validate_modes)
                check_mode_transition(kernel.klass(), kernel.memory_size(), mode, next,
                                      kernel.name(), model.render(s));
            obs = monitor.step(obs, Transition{s, taken.to, model.labels(taken.to), taken.red});
            s = std::move(taken.to);
            mode = next;
            v = monitor.verdict(obs);
            if (v == Verdict::Undecided && q.stop && q.stop(s)) break;
        }
        if (v == Verdict::Undecided) v = monitor.at_end(obs);
        switch (v) {
            case Verdict::Success: ++n_succ; break;
            case Verdict::Failure: ++n_fail; break;
            case Verdict::Undecided: ++n_und; break;
        }
        if (q.progress_every != 0 && (i + 1) % q.progress_every == 0)
            heartbeat(i + 1, q.samples, n_succ, n_fail);
    }
    return make_estimate(n_succ, n_fail, n_und);
}

nlohmann::json MeanEstimate::to_json() const {
    return {{"samples", samples}, {"mean", mean},   {"stddev", stddev}, {"sem", sem},
            {"min", min},         {"max", max},     {"stopped", stopped}};
}

MeanEstimate estimate_mean(const Model& model, const Kernel& kernel, const StateKey& start,
                           const CountSpec& what, const StopSpec& until, std::uint64_t samples,
                           std::uint64_t seed) {
    double sum = 0.0, sumsq = 0.0;
    std::uint64_t mn = ~0ull, mx = 0, stopped = 0;
    Edge fast_buf[Model::kFastSucc];
    for (std::uint64_t i = 0; i < samples; ++i) {
        Rng rng = Rng::substream(seed, i);
        StateKey s = start;
        Mode mode = kernel.initial_mode();
        std::uint64_t count = 0;
        if (what.label_mask != 0 && (model.labels(s) & what.label_mask) != 0) ++count;
        for (std::uint64_t t = 0; t < until.horizon; ++t) {
            if (until.stop && until.stop(s)) {
                ++stopped;
                break;
            }
            Edge taken;
            Mode next;
            std::size_t nsucc = 0;
            if (model.fast_succ(s, fast_buf, &nsucc)) {
                std::size_t idx = 0;
                if (kernel.fast_pick(mode, s, fast_buf, nsucc, rng, &idx, &next)) {
                    taken = std::move(fast_buf[idx]);
                } else {
                    StepOut out = step_kernel(model, kernel, mode, s, rng);
                    taken = std::move(out.edge);
                    next = out.mode;
                }
            } else if (model.fast_sample(s, rng.next(), taken)) {
                next = kernel.observe(mode, s, taken);
            } else {
                StepOut out = step_kernel(model, kernel, mode, s, rng);
                taken = std::move(out.edge);
                next = out.mode;
            }
            if (what.red_transitions && taken.red) ++count;
            if (what.label_mask != 0 && (model.labels(taken.to) & what.label_mask) != 0) ++count;
            s = std::move(taken.to);
            mode = next;
        }
        sum += static_cast<double>(count);
        sumsq += static_cast<double>(count) * static_cast<double>(count);
        if (count < mn) mn = count;
        if (count > mx) mx = count;
    }
    MeanEstimate e;
    e.samples = samples;
    e.stopped = stopped;
    if (samples == 0) return e;
    const double n = static_cast<double>(samples);
    e.mean = sum / n;
    const double var = samples > 1 ? (sumsq - sum * sum / n) / (n - 1.0) : 0.0;
    e.stddev = var > 0 ? std::sqrt(var) : 0.0;
    e.sem = e.stddev / std::sqrt(n);
    e.min = mn == ~0ull ? 0 : mn;
    e.max = mx;
    return e;
}

double chi_square(const std::vector<std::uint64_t>& observed,
                  const std::vector<double>& expected_prop) {
    if (observed.size() != expected_prop.size())
        throw ModelError("chi_square: size mismatch");
    std::uint64_t total = 0;
    for (auto c : observed) total += c;
    double stat = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        const double exp_count = expected_prop[i] * static_cast<double>(total);
        if (exp_count <= 0.0) {
            if (observed[i] != 0) throw ModelError("chi_square: mass on zero-probability cell");
            continue;
        }
        const double d = static_cast<double>(observed[i]) - exp_count;
        stat += d * d / exp_count;
    }
    return stat;
}

}  // namespace cmdp
