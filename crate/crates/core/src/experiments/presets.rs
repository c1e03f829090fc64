use serde_json::{json, Value};

use super::scenario::ScenarioSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PresetInfo {
    pub name: &'static str,
    pub description: &'static str,
}

const PRESETS: [PresetInfo; 7] = [
    PresetInfo {
        name: "fig6",
        description: "latency vs confirmations N, single chain, (k, rho) in {1,3,6} x {0.8,0.2}",
    },
    PresetInfo {
        name: "fig7",
        description: "Markov latency vs conventional closed form over confirmations and intensity, k = 3 with rejection",
    },
    PresetInfo {
        name: "fig8",
        description: "latency vs traffic intensity, single chain, k ∈ {1,3,6}",
    },
    PresetInfo {
        name: "fig9",
        description: "HB-RAN latency vs secondary intensity, per-chain and end-to-end",
    },
    PresetInfo {
        name: "fig10",
        description: "attack success probability vs relative attacker power for (N, N_g) combinations",
    },
    PresetInfo {
        name: "fig11",
        description: "HB-RAN latency vs secondary access links for secondary (k, rho) combinations",
    },
    PresetInfo {
        name: "fig12",
        description: "security vs latency over confirmations for s ∈ {10,25}, k ∈ {1,2,3}",
    },
];

/// Preset names and descriptions, in a fixed order.
pub fn list_presets() -> &'static [PresetInfo] {
    &PRESETS
}

fn chain(mining_rate: f64, rejection_rate: f64, servers: u32, block_capacity: u32) -> Value {
    json!({
        "arrival_rate": 1.0,
        "mining_rate": mining_rate,
        "rejection_rate": rejection_rate,
        "service_rate": 1.0,
        "servers": servers,
        "block_capacity": block_capacity,
        "rejection_batch": 1,
        "confirmations": 1
    })
}

fn fig9_primary() -> Value {
    let mut p = chain(100.0, 0.0, 25, 3);
    p["arrival_rate"] = json!(5.0);
    p
}

fn document(name: &str) -> Option<Value> {
    let confirmations: Vec<u32> = (1..=8).collect();
    let doc = match name {
        "fig6" => json!({
            "engine": "markov",
            "chain": chain(100.0, 0.0, 10, 1),
            "sweep": [
                {
                    "parameters": ["chain.block_capacity", "chain.intensity"],
                    "values": [[1, 0.8], [3, 0.8], [6, 0.8], [1, 0.2], [3, 0.2], [6, 0.2]]
                },
                { "parameter": "chain.confirmations", "values": confirmations }
            ]
        }),
        "fig7" => json!({
            "engine": "markov",
            "chain": chain(10.0, 1.0, 10, 3),
            "sweep": [
                { "parameter": "chain.confirmations", "values": [1, 2, 4, 6] },
                { "parameter": "chain.intensity", "values": [0.2, 0.4, 0.6, 0.8] }
            ]
        }),
        "fig8" => json!({
            "engine": "markov",
            "chain": chain(100.0, 0.0, 10, 1),
            "sweep": [
                { "parameter": "chain.block_capacity", "values": [1, 3, 6] },
                { "parameter": "chain.intensity", "values": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8] }
            ]
        }),
        "fig9" => json!({
            "engine": "hierarchical-simulation",
            "hierarchy": {
                "primary": fig9_primary(),
                "secondary": chain(2.0, 0.2, 2, 3)
            },
            "sweep": [
                { "parameter": "secondary.intensity", "values": [0.2, 0.5, 0.8] }
            ]
        }),
        "fig10" => json!({
            "engine": "attack",
            "attack": { "relative_power": 0.1, "giveup_threshold": 12, "method": "direct-sum" },
            "sweep": [
                {
                    "parameters": ["attack.confirmations", "attack.giveup_threshold"],
                    "values": [[1, 6], [1, 12], [3, 6], [3, 12]]
                },
                {
                    "parameter": "attack.relative_power",
                    "values": [0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]
                }
            ]
        }),
        "fig11" => json!({
            "engine": "hierarchical-simulation",
            "hierarchy": {
                "primary": fig9_primary(),
                "secondary": chain(25.0, 0.0, 2, 1)
            },
            "sweep": [
                {
                    "parameters": ["secondary.block_capacity", "secondary.intensity"],
                    "values": [[1, 0.2], [1, 0.8], [3, 0.2], [3, 0.8]]
                },
                { "parameter": "secondary.servers", "values": [2, 4, 8, 12, 16, 20] }
            ]
        }),
        "fig12" => {
            let mut base = chain(100.0, 0.0, 10, 1);
            base["arrival_rate"] = json!(8.0);
            json!({
                "engine": "markov",
                "chain": base,
                "attack": { "relative_power": 0.2, "giveup_threshold": 20, "method": "direct-sum" },
                "sweep": [
                    {
                        "parameters": ["chain.servers", "chain.block_capacity"],
                        "values": [[10, 1], [10, 2], [10, 3], [25, 1], [25, 2], [25, 3]]
                    },
                    { "parameter": "chain.confirmations", "values": confirmations }
                ]
            })
        }
        _ => return None,
    };
    Some(doc)
}

/// The scenario behind a preset, or `None` for an unknown name.
pub fn preset(name: &str) -> Option<ScenarioSpec> {
    let mut doc = document(name)?;
    doc["schema_version"] = json!(super::SCHEMA_VERSION);
    doc["name"] = json!(name);
    doc["replication"] = json!({ "seed": 20240601, "target_served": 100000, "trials": 1000000 });
    let spec = ScenarioSpec::from_json(&doc.to_string()).expect("presets are well formed");
    Some(spec)
}
