#include "mocap/ik.hpp"

#include <cmath>
#include <numeric>

namespace mocap {

namespace {

struct ActiveSet {
    std::vector<int> keypoints;   // indices into targets
    std::vector<double> weights;  // normalized to mean 1
};

ActiveSet select_targets(const IkTargets& targets, double min_weight) {
    ActiveSet out;
    double wsum = 0.0;
    for (int k = 0; k < kKeypointCount; ++k) {
        if (!targets[k].active || targets[k].weight < min_weight) continue;
        if (!std::isfinite(targets[k].weight) || targets[k].weight < 0.0)
            throw IllPosedError("target weight must be finite and non-negative");
        out.keypoints.push_back(k);
        out.weights.push_back(targets[k].weight);
        wsum += targets[k].weight;
    }
    if (out.keypoints.size() < 4)
        throw IllPosedError("IK needs at least 4 active targets, got " +
                            std::to_string(out.keypoints.size()));
    const double mean = wsum / static_cast<double>(out.weights.size());
    for (double& w : out.weights) w /= mean;
    return out;
}

// Rotational DoF of non-root joints owning no keypoint (spine, chest,
// neck, head, clavicles, wrists). These are weakly pulled to q_ref so the
// 40-DoF solve with 17 targets stays well posed.
std::vector<int> regularized_dofs(const SkeletonModel& model) {
    std::vector<bool> owns(model.joints.size(), false);
    for (int k = 0; k < kKeypointCount; ++k) owns[model.keypoint_map[k]] = true;
    std::vector<int> dofs;
    for (const auto& jt : model.joints) {
        if (jt.type == DofType::Root6 || jt.rotational_dof() == 0) continue;
        if (owns[&jt - model.joints.data()]) continue;
        for (int s = 0; s < jt.rotational_dof(); ++s) dofs.push_back(jt.q_index + s);
    }
    return dofs;
}

double objective(const SkeletonModel& model, const JointAngles& q, const IkTargets& targets,
                 const ActiveSet& act, const std::vector<int>& reg, double rho,
                 const JointAngles& q_ref, const JointPositions& pos) {
    double obj = 0.0;
    for (size_t i = 0; i < act.keypoints.size(); ++i) {
        const int j = model.keypoint_map[act.keypoints[i]];
        const Vec3 r = targets[act.keypoints[i]].position - pos.row(j).transpose();
        obj += act.weights[i] * r.squaredNorm();
    }
    for (int d : reg) {
        const double e = q[d] - q_ref[d];
        obj += rho * e * e;
    }
    return obj;
}

IkResult solve_impl(const SkeletonModel& model, const JointAngles& q_init,
                    const IkTargets& targets, const IkConfig& cfg) {
    if (!q_init.allFinite()) throw NumericalFailureError("q_init contains non-finite entries");
    const ActiveSet act = select_targets(targets, cfg.min_weight);
    const std::vector<int> reg = regularized_dofs(model);
    const double rho = cfg.regularization;
    const double wtotal =
        3.0 * std::accumulate(act.weights.begin(), act.weights.end(), 0.0);

    JointAngles q = cfg.rom_enforced ? clamp_to_rom(model, q_init) : q_init;
    const JointAngles q_ref = cfg.reference.size() == kDofCount ? cfg.reference : q_init;

    IkResult res;
    res.report.active_targets = static_cast<int>(act.keypoints.size());

    JointPositions pos = forward_kinematics(model, q);
    double obj = objective(model, q, targets, act, reg, rho, q_ref, pos);
    res.report.residuals.push_back(std::sqrt(obj / wtotal));

    double lambda = cfg.damping;
    for (int it = 0; it < cfg.max_iterations; ++it) {
        const MatX J = jacobian(model, q);

        MatX H = MatX::Zero(kDofCount, kDofCount);
        VecX g = VecX::Zero(kDofCount);
        for (size_t i = 0; i < act.keypoints.size(); ++i) {
            const int j = model.keypoint_map[act.keypoints[i]];
            const auto Jk = J.middleRows(3 * j, 3);
            const Vec3 r = targets[act.keypoints[i]].position - pos.row(j).transpose();
            H.noalias() += act.weights[i] * Jk.transpose() * Jk;
            g.noalias() += act.weights[i] * Jk.transpose() * r;
        }
        for (int d : reg) {
            H(d, d) += rho;
            g[d] += rho * (q_ref[d] - q[d]);
        }

        bool accepted = false;
        while (lambda < 1e10) {
            MatX Hd = H;
            Hd.diagonal().array() += lambda;
            const VecX dq = Hd.ldlt().solve(g);
            if (!dq.allFinite())
                throw NumericalFailureError("non-finite IK step at iteration " +
                                            std::to_string(it));
            JointAngles qc = q + dq;
            if (cfg.rom_enforced) qc = clamp_to_rom(model, qc);
            const JointPositions pc = forward_kinematics(model, qc);
            const double oc = objective(model, qc, targets, act, reg, rho, q_ref, pc);
            if (oc <= obj * (1.0 + 1e-14) + 1e-300) {
                const double step = (qc - q).norm();
                q = qc;
                pos = pc;
                obj = oc;
                lambda = std::max(cfg.damping, lambda * 0.1);
                res.report.residuals.push_back(std::sqrt(obj / wtotal));
                ++res.report.iterations;
                accepted = true;
                if (step < cfg.step_tolerance ||
                    res.report.residuals.back() < cfg.residual_tolerance)
                    res.report.converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!accepted) {
            // No decreasing step exists at any damping: stationary point
            // (possibly on the RoM boundary).
            res.report.converged = true;
            break;
        }
        if (res.report.converged) break;
    }

    res.report.final_residual = res.report.residuals.back();
    res.q = q;
    res.positions = pos;
    return res;
}

}  // namespace

IkResult solve_weighted(const SkeletonModel& model, const JointAngles& q_init,
                        const IkTargets& targets, const IkConfig& cfg) {
    IkConfig c = cfg;
    c.rom_enforced = false;
    return solve_impl(model, q_init, targets, c);
}

IkResult solve_constrained(const SkeletonModel& model, const JointAngles& q_init,
                           const IkTargets& targets, const IkConfig& cfg) {
    // Eq.-14 form: no per-target weights in the second stage.
    IkTargets uniform = targets;
    for (auto& t : uniform)
        if (t.active) t.weight = 1.0;
    IkConfig c = cfg;
    c.rom_enforced = true;
    return solve_impl(model, q_init, uniform, c);
}

}  // namespace mocap
