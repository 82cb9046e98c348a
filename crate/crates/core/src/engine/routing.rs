//! Message passing constrained by the department's reporting lines.

use crate::agent::{AgentId, Role};

use super::SimTime;

#[derive(Debug, Clone)]
pub struct Message<B> {
    pub from: AgentId,
    pub to: AgentId,
    pub body: B,
    pub sent_at: SimTime,
}

/// Who may talk to whom. The manager talks with every supervisor,
/// supervisors talk among themselves and with their own designers, and
/// designers talk with colleagues on the same team. Everything else is a
/// hierarchy violation, including self-addressed mail.
pub fn hierarchy_allows(from: AgentId, to: AgentId) -> bool {
    if from == to {
        return false;
    }
    match (from.role, to.role) {
        (Role::Manager, Role::Supervisor) | (Role::Supervisor, Role::Manager) => true,
        (Role::Supervisor, Role::Supervisor) => true,
        (Role::Supervisor, Role::Designer) | (Role::Designer, Role::Supervisor) => {
            from.team == to.team
        }
        (Role::Designer, Role::Designer) => from.team == to.team,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allowed_pairs_follow_the_reporting_lines() {
        let manager = AgentId::manager();
        let sup0 = AgentId::supervisor(0);
        let sup1 = AgentId::supervisor(1);
        let des00 = AgentId::designer(0, 0);
        let des01 = AgentId::designer(0, 1);
        let des10 = AgentId::designer(1, 0);

        assert!(hierarchy_allows(manager, sup0));
        assert!(hierarchy_allows(manager, sup1));
        assert!(hierarchy_allows(sup1, manager));
        assert!(hierarchy_allows(sup0, sup1));
        assert!(hierarchy_allows(sup0, des01));
        assert!(hierarchy_allows(des01, sup0));
        assert!(hierarchy_allows(des00, des01));
        assert!(hierarchy_allows(des01, des00));

        // Outside the relation.
        assert!(!hierarchy_allows(manager, des00));
        assert!(!hierarchy_allows(des00, manager));
        assert!(!hierarchy_allows(des00, des10));
        assert!(!hierarchy_allows(sup0, des10));
        assert!(!hierarchy_allows(des10, sup0));
        assert!(!hierarchy_allows(des00, des00));
        assert!(!hierarchy_allows(manager, manager));
    }
}
