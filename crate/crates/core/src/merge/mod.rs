//! Conflict detection, the merge algebra and lowering of merged trees.
mod algebra;
mod conflicts;
mod lower;

pub use algebra::{merge, merge_all, normalize, MergeError, Merged};
pub use conflicts::{
    build_plan, detect_conflicts, merge_group, Detected, GroupMerge, MergeStats, MergedPlan,
    RewriteGroup,
};
pub use lower::{is_operator_type, lower, LowerError, OP_TYPES};
