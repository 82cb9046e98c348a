//! The scenario's functional forms: work rate, attribute drift, knowledge
//! transfer, and work progress. All pure; the model owns when to apply them.

use crate::agent::clamp01;

/// Work rate in effort-hours per hour:
/// `r = p * g * ((1 - tau) + tau * team_comm_mean)`.
///
/// `team_comm_mean` is the mean communication level over the designer's team
/// including the designer. High-teamwork contracts (`tau` near 1) make the
/// rate track team communication; `tau = 0` removes the team from the
/// equation entirely.
pub fn effective_rate(productivity: f64, gate: f64, tau: f64, team_comm_mean: f64) -> f64 {
    productivity * gate * ((1.0 - tau) + tau * team_comm_mean)
}

/// Knowledge gate for an activity requiring `theta`: full rate when the
/// designer knows enough, most of it while a support session is running,
/// half otherwise.
pub fn knowledge_gate(
    knowledge: f64,
    theta: f64,
    session_active: bool,
    g_supported: f64,
    g_unsupported: f64,
) -> f64 {
    if knowledge >= theta {
        1.0
    } else if session_active {
        g_supported
    } else {
        g_unsupported
    }
}

/// One Euler step of communication drift toward the rest of the team.
///
/// `mean_diff_others` is `mean over teammates j != i of (m_j - m_i)`; using
/// the mean of differences makes a homogeneous team an exact fixed point.
/// The step factor `eta_m * willingness * dt_eff` is capped at 1 so a long
/// step saturates at the team mean instead of overshooting it.
pub fn comm_step(
    m: f64,
    willingness: f64,
    mean_diff_others: f64,
    eta_m: f64,
    dt_eff: f64,
) -> f64 {
    let factor = (eta_m * willingness * dt_eff).min(1.0);
    clamp01(m + factor * mean_diff_others)
}

/// Productivity setpoint: while working it is pulled toward the mean of the
/// active category's knowledge and own communication; otherwise it relaxes
/// to the stereotype's base productivity.
pub fn productivity_target(working: bool, active_knowledge: f64, m: f64, base: f64) -> f64 {
    if working {
        0.5 * (active_knowledge + m)
    } else {
        base
    }
}

/// One Euler step of productivity toward `target`, same saturation cap as
/// [`comm_step`].
pub fn productivity_step(p: f64, target: f64, eta_p: f64, dt: f64) -> f64 {
    let factor = (eta_p * dt).min(1.0);
    clamp01(p + factor * (target - p))
}

/// Requester's knowledge after a completed support session.
pub fn knowledge_transfer(k_requester: f64, k_supporter: f64, eta_k: f64) -> f64 {
    clamp01(k_requester + eta_k * (k_supporter - k_requester))
}

/// Remaining effort after `elapsed` hours at a frozen `rate`.
pub fn work_progress(remaining: f64, rate: f64, elapsed: f64) -> f64 {
    (remaining - rate * elapsed).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_rate_when_nothing_holds_the_designer_back() {
        assert_eq!(effective_rate(1.0, 1.0, 0.0, 0.3), 1.0);
    }

    #[test]
    fn unsupported_gate_halves_the_rate() {
        let g = knowledge_gate(0.4, 0.7, false, 0.9, 0.5);
        assert_eq!(effective_rate(0.8, g, 0.0, 0.0), 0.4);
    }

    #[test]
    fn high_teamwork_with_poor_communication_is_very_slow() {
        let r = effective_rate(1.0, 1.0, 1.0, 0.1);
        assert!((r - 0.1).abs() < 1e-12);
    }

    #[test]
    fn rate_is_monotone_in_team_communication_when_teamwork_matters() {
        let lo = effective_rate(0.8, 1.0, 0.6, 0.2);
        let hi = effective_rate(0.8, 1.0, 0.6, 0.9);
        assert!(hi > lo);
        assert_eq!(
            effective_rate(0.8, 1.0, 0.0, 0.2),
            effective_rate(0.8, 1.0, 0.0, 0.9)
        );
    }

    #[test]
    fn supported_gate_beats_unsupported() {
        assert_eq!(knowledge_gate(0.4, 0.7, true, 0.9, 0.5), 0.9);
        assert_eq!(knowledge_gate(0.7, 0.7, false, 0.9, 0.5), 1.0);
    }

    #[test]
    fn communicator_drifts_down_toward_a_quiet_team() {
        // factor eta*w*dt = 0.5, teammates all at 0.1, self at 0.9.
        let m = comm_step(0.9, 1.0, 0.1 - 0.9, 0.5, 1.0);
        assert!((m - 0.5).abs() < 1e-12);
    }

    #[test]
    fn homogeneous_team_is_an_exact_fixed_point() {
        let m = 0.30000000000000004;
        assert_eq!(comm_step(m, 1.0, 0.0, 0.05, 10.0), m);
    }

    #[test]
    fn drift_sign_follows_the_team() {
        assert!(comm_step(0.5, 1.0, 0.2, 0.05, 1.0) > 0.5);
        assert!(comm_step(0.5, 1.0, -0.2, 0.05, 1.0) < 0.5);
    }

    #[test]
    fn huge_steps_saturate_instead_of_overshooting() {
        let m = comm_step(0.05, 1.0, 0.95, 10.0, 100.0);
        assert_eq!(m, 1.0);
        // Saturation cap: lands exactly on self + mean_diff, never beyond.
        let m = comm_step(0.3, 1.0, 0.2, 10.0, 100.0);
        assert!((m - 0.5).abs() < 1e-12);
    }

    #[test]
    fn productivity_relaxes_to_base_when_not_working() {
        assert_eq!(productivity_target(false, 0.9, 0.9, 0.55), 0.55);
        assert_eq!(productivity_target(true, 0.9, 0.3, 0.55), 0.6);
    }

    #[test]
    fn productivity_step_moves_toward_target() {
        let p = productivity_step(0.4, 0.8, 0.05, 2.0);
        assert!((p - 0.44).abs() < 1e-12);
        assert_eq!(productivity_step(0.4, 0.4, 0.05, 5.0), 0.4);
    }

    #[test]
    fn support_session_lifts_the_requester_partway() {
        let k = knowledge_transfer(0.4, 0.9, 0.3);
        assert!((k - 0.55).abs() < 1e-12);
        assert_eq!(knowledge_transfer(0.9, 0.9, 0.3), 0.9);
    }

    #[test]
    fn work_progress_floors_at_zero() {
        assert!((work_progress(4.0, 0.5, 2.0) - 3.0).abs() < 1e-12);
        assert_eq!(work_progress(4.0, 0.5, 0.0), 4.0);
        assert_eq!(work_progress(1.0, 0.5, 4.0), 0.0);
    }
}
