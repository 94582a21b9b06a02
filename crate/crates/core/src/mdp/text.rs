//! The `automaton v1` text format.
//!
//! ```text
//! automaton v1
//! <states> <actions>
//! goals <state> <state> ...
//! <state>,<action>,<to>:<prob>,<to>:<prob>,...
//! ```
//!
//! One line per non-empty row. Parsing checks syntax and dimensions only;
//! [`StochasticAutomaton::validate`] reports the remaining invariants.

use crate::error::{Error, Result};
use crate::stats::{fmt_f64, parse_f64};

use super::{AutomatonBuilder, StochasticAutomaton};

pub const AUTOMATON_HEADER: &str = "automaton v1";

impl StochasticAutomaton {
    pub fn to_text(&self) -> String {
        let mut s = format!("{AUTOMATON_HEADER}\n{} {}\ngoals", self.num_states(), self.num_actions());
        for g in self.goals() {
            s.push_str(&format!(" {g}"));
        }
        s.push('\n');
        for state in 0..self.num_states() {
            for action in 0..self.num_actions() {
                let row = self.row(state, action);
                if row.is_empty() {
                    continue;
                }
                s.push_str(&format!("{state},{action}"));
                for t in row {
                    s.push_str(&format!(",{}:{}", t.to, fmt_f64(t.prob)));
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, AUTOMATON_HEADER)) => {}
            Some((n, l)) => return Err(Error::parse(n, format!("expected {AUTOMATON_HEADER:?}, found {l:?}"))),
            None => return Err(Error::parse(1, "empty input")),
        }
        let (n, dims) = lines.next().ok_or_else(|| Error::parse(2, "missing dimensions"))?;
        let dims: Vec<usize> = dims
            .split(' ')
            .map(|d| d.parse().map_err(|_| Error::parse(n, format!("bad dimension {d:?}"))))
            .collect::<Result<_>>()?;
        let [states, actions] = dims[..] else {
            return Err(Error::parse(n, "expected \"<states> <actions>\""));
        };
        let mut b = AutomatonBuilder::new(states, actions);
        let (n, goals) = lines.next().ok_or_else(|| Error::parse(3, "missing goals line"))?;
        let mut words = goals.split(' ');
        if words.next() != Some("goals") {
            return Err(Error::parse(n, "expected goals line"));
        }
        for g in words {
            b.add_goal(g.parse().map_err(|_| Error::parse(n, format!("bad goal {g:?}")))?);
        }
        let mut seen = std::collections::BTreeSet::new();
        for (n, line) in lines {
            let mut fields = line.split(',');
            let mut index = |what: &str| -> Result<usize> {
                let f = fields.next().ok_or_else(|| Error::parse(n, format!("missing {what}")))?;
                f.parse().map_err(|_| Error::parse(n, format!("bad {what} {f:?}")))
            };
            let state = index("state")?;
            let action = index("action")?;
            if state >= states || action >= actions {
                return Err(Error::parse(n, format!("row ({state}, {action}) outside {states}x{actions}")));
            }
            if !seen.insert((state, action)) {
                return Err(Error::parse(n, format!("row ({state}, {action}) given twice")));
            }
            let row = fields
                .map(|f| {
                    let (to, p) = f.split_once(':').ok_or_else(|| Error::parse(n, format!("bad transition {f:?}")))?;
                    let to = to.parse().map_err(|_| Error::parse(n, format!("bad successor {to:?}")))?;
                    Ok((to, parse_f64(p, n)?))
                })
                .collect::<Result<Vec<_>>>()?;
            if row.is_empty() {
                return Err(Error::parse(n, "row without transitions"));
            }
            b.set_row(state, action, row);
        }
        Ok(b.build())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::random_automaton;

    #[test]
    fn round_trip() {
        let a = random_automaton(12, 3, 4, 2, 7);
        let text = a.to_text();
        let back = StochasticAutomaton::parse(&text).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn corrupt_rows_parse_but_fail_validation() {
        let text = "automaton v1\n2 1\ngoals 1\n0,0,0:0.5,1:0.25\n1,0,1:1.0\n";
        let a = StochasticAutomaton::parse(text).unwrap();
        let v = a.validate();
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().contains("state 0, action 0"));
    }

    #[test]
    fn syntax_errors() {
        for bad in [
            "",
            "automaton v2\n1 1\ngoals\n",
            "automaton v1\n1\ngoals\n",
            "automaton v1\n1 1\ngoal 0\n",
            "automaton v1\n1 1\ngoals\n0,1,0:1.0\n",
            "automaton v1\n1 1\ngoals\n0,0,0-1.0\n",
            "automaton v1\n1 1\ngoals\n0,0,0:1.0\n0,0,0:1.0\n",
        ] {
            assert!(StochasticAutomaton::parse(bad).is_err(), "{bad:?}");
        }
    }
}
