/// Scenario files shipped with the binary, by name.
pub const SCENARIOS: [(&str, &str); 4] = [
    ("art-auction", include_str!("../scenarios/art-auction.json")),
    ("real-estate", include_str!("../scenarios/real-estate.json")),
    ("contention", include_str!("../scenarios/contention.json")),
    ("wrong-winner", include_str!("../scenarios/wrong-winner.json")),
];

pub fn get(name: &str) -> Option<&'static str> {
    SCENARIOS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}
