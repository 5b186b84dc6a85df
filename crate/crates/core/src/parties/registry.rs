use std::collections::{BTreeMap, BTreeSet};

use super::psl::{PartyError, SuffixList};

static BUNDLED_CMPS: &str = include_str!("../../data/cmp_list.csv");

fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.trim();
        (!line.is_empty() && !line.starts_with('#')).then_some((i + 1, line))
    })
}

/// CMP ids mapped to display names, as published in the public CMP list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CmpRegistry {
    names: BTreeMap<u16, String>,
}

impl CmpRegistry {
    /// One `id,name` record per line; `#` comments.
    pub fn parse(text: &str) -> Result<Self, PartyError> {
        let mut names = BTreeMap::new();
        for (line, record) in records(text) {
            let bad = |message: &str| PartyError::BadRecord {
                file: "cmp list",
                line,
                message: message.to_owned(),
            };
            let (id, name) = record.split_once(',').ok_or_else(|| bad("expected `id,name`"))?;
            let id: u16 = id.trim().parse().map_err(|_| bad("cmp id is not a number"))?;
            if id == 0 {
                return Err(bad("cmp ids are positive"));
            }
            let name = name.trim();
            if name.is_empty() {
                return Err(bad("empty cmp name"));
            }
            names.insert(id, name.to_owned());
        }
        Ok(Self { names })
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_CMPS).expect("bundled cmp list is valid")
    }

    pub fn name(&self, cmp_id: u16) -> Option<&str> {
        self.names.get(&cmp_id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Registrable domains known to track, extracted from a filter list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrackingDomains {
    domains: BTreeSet<String>,
}

impl TrackingDomains {
    /// One domain per line. Adblock-style `||domain^` entries are accepted.
    pub fn parse(text: &str) -> Self {
        let domains = records(text)
            .filter(|(_, l)| !l.starts_with('!'))
            .map(|(_, l)| {
                l.trim_start_matches("||")
                    .trim_end_matches('^')
                    .trim_end_matches('.')
                    .to_ascii_lowercase()
            })
            .filter(|d| !d.is_empty())
            .collect();
        Self { domains }
    }

    pub fn contains(&self, party: &str) -> bool {
        self.domains.contains(party)
    }

    pub fn len(&self) -> usize {
        self.domains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domains.is_empty()
    }
}

/// Per-site domains that belong to the site operator (CDNs, sister domains).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FirstPartyAliases {
    aliases: BTreeMap<String, BTreeSet<String>>,
}

impl FirstPartyAliases {
    /// One `site,alias[,alias...]` record per line.
    pub fn parse(text: &str) -> Result<Self, PartyError> {
        let mut aliases: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (line, record) in records(text) {
            let mut fields = record.split(',').map(|f| f.trim().to_ascii_lowercase());
            let site = fields.next().unwrap_or_default();
            let names: Vec<String> = fields.filter(|f| !f.is_empty()).collect();
            if site.is_empty() || names.is_empty() {
                return Err(PartyError::BadRecord {
                    file: "first-party aliases",
                    line,
                    message: "expected `site,alias[,alias...]`".into(),
                });
            }
            aliases.entry(site).or_default().extend(names);
        }
        Ok(Self { aliases })
    }

    pub fn is_alias(&self, site: &str, domain: &str) -> bool {
        self.aliases.get(site).is_some_and(|set| set.contains(domain))
    }
}

/// Everything needed to decide who a domain belongs to.
#[derive(Debug, Clone)]
pub struct PartyRegistry {
    pub suffixes: SuffixList,
    pub cmps: CmpRegistry,
    pub tracking: TrackingDomains,
    pub aliases: FirstPartyAliases,
}

impl Default for PartyRegistry {
    fn default() -> Self {
        Self {
            suffixes: SuffixList::default(),
            cmps: CmpRegistry::bundled(),
            tracking: TrackingDomains::default(),
            aliases: FirstPartyAliases::default(),
        }
    }
}

impl PartyRegistry {
    pub fn registrable_domain(&self, host_or_url: &str) -> Result<String, PartyError> {
        self.suffixes.registrable_domain(host_or_url)
    }

    /// Registrable domain of the site itself.
    pub fn site_domain(&self, site: &str) -> String {
        self.registrable_domain(site).unwrap_or_else(|_| site.to_ascii_lowercase())
    }

    /// True when `party` (a registrable domain) is the site or one of its
    /// declared aliases.
    pub fn is_first_party(&self, site: &str, party: &str) -> bool {
        let site_domain = self.site_domain(site);
        party == site_domain || self.aliases.is_alias(&site_domain, party)
    }

    pub fn is_tracking_domain(&self, party: &str) -> bool {
        self.tracking.contains(party)
    }
}
