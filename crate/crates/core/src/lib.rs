//! Donor invitation planning for blood collection sessions.

pub mod bilp;
pub mod datagen;
pub mod demand;
pub mod eligibility;
pub mod error;
pub mod exact;
pub mod forecast;
pub mod geo;
pub mod greedy;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod plan;
pub mod resources;

pub use bilp::{DemandMode, ModelConfig};
pub use demand::{Component, DemandPanel, DemandTarget, DemandTargets};
pub use eligibility::{ClassKey, EligibilityConfig, FeasiblePair, FeasiblePairs};
pub use error::{Error, Result};
pub use forecast::{ForecastMethod, MonthlySeries};
pub use geo::{haversine_km, GeoPoint, PostalCodeTable};
pub use model::{
    BloodGroup, Donation, Donor, DonorId, PlanningMonth, RecencyStatus, Registry, SessionId, SessionWindow, Sex, Site,
    SiteId, Suspension,
};
pub use pipeline::{ScenarioConfig, WindowConfig};
pub use plan::{InvitationPlan, PlanMetrics, PlannedInvitation, Violation, ViolationFamily};
