//! In-process stand-in for the secured link between chain leader groups.
//! Every message is signed by its sender and bound to a recipient and a
//! sequence number; payloads travel in the clear.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::codec::Writer;
use crate::crypto::{KeyPair, PublicKeyRef, SignatureRecord};
use crate::model::ChainId;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub from: ChainId,
    pub to: ChainId,
    pub seq: u64,
    pub payload: Vec<u8>,
    pub signature: SignatureRecord,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChannelError {
    #[error("message for chain {0} delivered to the wrong recipient")]
    WrongRecipient(ChainId),
    #[error("sender is not a leader of chain {0}")]
    UnknownSender(ChainId),
    #[error("bad message signature")]
    BadSignature,
    #[error("replayed or reordered message (seq {got}, expected above {last})")]
    Replay { got: u64, last: u64 },
}

impl Envelope {
    fn message(from: ChainId, to: ChainId, seq: u64, payload: &[u8]) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(b"ior/envelope").u32(from.0).u32(to.0).u64(seq).bytes(payload);
        w.into_bytes()
    }

    pub fn seal(from: ChainId, to: ChainId, seq: u64, payload: Vec<u8>, sender: &KeyPair) -> Self {
        let signature = sender.sign(&Self::message(from, to, seq, &payload));
        Envelope { from, to, seq, payload, signature }
    }

    pub fn signature_valid(&self) -> bool {
        self.signature.verify(&Self::message(self.from, self.to, self.seq, &self.payload))
    }
}

/// Receiving end for one chain: knows each peer's leader keys and the last
/// sequence number seen from it.
#[derive(Clone, Debug, Default)]
pub struct Inbox {
    last_seq: BTreeMap<ChainId, u64>,
}

impl Inbox {
    pub fn open<'a>(
        &mut self,
        me: ChainId,
        env: &'a Envelope,
        sender_leaders: &[PublicKeyRef],
    ) -> Result<&'a [u8], ChannelError> {
        if env.to != me {
            return Err(ChannelError::WrongRecipient(env.to));
        }
        if !sender_leaders.contains(&env.signature.signer) {
            return Err(ChannelError::UnknownSender(env.from));
        }
        if !env.signature_valid() {
            return Err(ChannelError::BadSignature);
        }
        let last = self.last_seq.get(&env.from).copied().unwrap_or(0);
        if env.seq <= last {
            return Err(ChannelError::Replay { got: env.seq, last });
        }
        self.last_seq.insert(env.from, env.seq);
        Ok(&env.payload)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::key;

    #[test]
    fn open_checks_sender_recipient_and_order() {
        let k = key("leader1");
        let mut inbox = Inbox::default();
        let env = Envelope::seal(ChainId(1), ChainId(2), 1, b"hi".to_vec(), &k);
        assert_eq!(inbox.open(ChainId(3), &env, &[k.pk]), Err(ChannelError::WrongRecipient(ChainId(2))));
        assert_eq!(inbox.open(ChainId(2), &env, &[key("x").pk]), Err(ChannelError::UnknownSender(ChainId(1))));
        assert_eq!(inbox.open(ChainId(2), &env, &[k.pk]), Ok(&b"hi"[..]));
        assert_eq!(inbox.open(ChainId(2), &env, &[k.pk]), Err(ChannelError::Replay { got: 1, last: 1 }));
        let mut forged = Envelope::seal(ChainId(1), ChainId(2), 2, b"hi".to_vec(), &k);
        forged.payload = b"ho".to_vec();
        assert_eq!(inbox.open(ChainId(2), &forged, &[k.pk]), Err(ChannelError::BadSignature));
    }
}
