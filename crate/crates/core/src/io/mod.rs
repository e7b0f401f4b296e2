//! File formats: transaction and stock CSVs, TOML run configurations and
//! scenarios, and posterior sample tables.

mod config;
mod samples;
mod transactions;

pub use config::{
    load_scenario, resolve_data_path, scenario_from_toml, scenario_to_toml, sha256_hex, DataConfig, LoadedConfig,
    ModelConfig, PriorSettings, RunConfig, SamplerSettings, DATA_DIR_ENV,
};
pub use samples::{read_provenance, read_samples, write_provenance, write_rhat, write_samples, Provenance};
pub use transactions::{
    apply_stock, break_ties, derive_stock_from_last_purchase, parse_time, parse_transactions, sort_ids, write_stock,
    write_transactions, Clock, ColumnMap, TransactionOptions,
};
