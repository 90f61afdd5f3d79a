//! The append-only record of every message a scenario exchanges.

use std::fmt::Write as _;

/// One message between two parties.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogRecord {
    pub index: usize,
    pub tick: u64,
    /// The script event that produced the message.
    pub event: usize,
    /// Withdrawal session the message belongs to, if any.
    pub session: Option<usize>,
    pub sender: String,
    pub receiver: String,
    pub kind: &'static str,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventLog {
    records: Vec<LogRecord>,
}

impl EventLog {
    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        tick: u64,
        event: usize,
        session: Option<usize>,
        sender: &str,
        receiver: &str,
        kind: &'static str,
        bytes: Vec<u8>,
    ) {
        let index = self.records.len();
        self.records.push(LogRecord {
            index,
            tick,
            event,
            session,
            sender: sender.to_string(),
            receiver: receiver.to_string(),
            kind,
            bytes,
        });
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// One line per record: index, tick, event, sender, receiver, kind and
    /// the wire bytes in hex.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let session = r.session.map_or("-".to_string(), |s| s.to_string());
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {} {}",
                r.index,
                r.tick,
                r.event,
                session,
                r.sender,
                r.receiver,
                r.kind,
                hex::encode(&r.bytes)
            );
        }
        out
    }
}
