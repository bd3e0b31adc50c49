//! Parsing of communication and purchase logs, social graph construction,
//! and per-user profile assembly.

mod events;
mod network;
mod profiles;
mod transactions;

pub use crate::graph::SocialGraph;
pub use events::{parse_events, parse_events_from_reader, write_events, CommEvent, CommKind, EVENTS_HEADER};
pub use network::{build_graph, filter_active_core, largest_component, GraphBuild};
pub use profiles::{
    assemble_profiles, month_key, parse_demographics, parse_demographics_from_reader, read_profiles,
    read_profiles_file, weekday_index, write_demographics, write_profiles, write_profiles_file, Demographic,
    EgoProfile, Gender, ProfileOptions, ProfileSet, DEMOGRAPHICS_HEADER,
};
pub use transactions::{
    parse_transactions, parse_transactions_from_reader, write_transactions, ParsedTransactions, RowDiagnostic,
    TransactionRecord, TRANSACTIONS_HEADER,
};
