//! Canonical byte encoding. The layout is documented field by field in
//! `docs/canonical-encoding.md`; any change here must be mirrored there and
//! in the golden vectors under `crates/core/tests/fixtures/`.

use thiserror::Error;

use crate::crypto::{PublicKeyRef, Scheme, SignatureRecord, VrfOutput};
use crate::hash::Hash;
use crate::model::{
    Block, BlockData, ChainId, ColorTag, CooperationStep, EntityId, Transaction, TxInput,
    TxOutput, UtxoKind,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("unexpected end of input at offset {0}")]
    Truncated(usize),
    #[error("invalid {what} tag {tag:#04x} at offset {offset}")]
    BadTag { what: &'static str, tag: u8, offset: usize },
    #[error("invalid utf-8 string at offset {0}")]
    BadString(usize),
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("length {0} exceeds remaining input")]
    BadLength(usize),
}

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u16(&mut self, v: u16) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn raw(&mut self, v: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(v);
        self
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.u32(v.len() as u32);
        self.raw(v)
    }

    pub fn str(&mut self, v: &str) -> &mut Self {
        self.bytes(v.as_bytes())
    }

    pub fn hash(&mut self, h: &Hash) -> &mut Self {
        self.raw(&h.0)
    }

    pub fn pk(&mut self, pk: &PublicKeyRef) -> &mut Self {
        self.u8(pk.scheme.tag());
        self.raw(&pk.key)
    }

    pub fn sig(&mut self, s: &SignatureRecord) -> &mut Self {
        self.pk(&s.signer);
        self.hash(&s.output.hash);
        self.bytes(&s.output.proof)
    }

    pub fn opt_sig(&mut self, s: &Option<SignatureRecord>) -> &mut Self {
        match s {
            None => self.u8(0),
            Some(s) => self.u8(1).sig(s),
        }
    }

    pub fn output(&mut self, o: &TxOutput) -> &mut Self {
        self.pk(&o.owner);
        self.u64(o.value);
        self.u8(o.kind.tag());
        self.str(&o.entity.0);
        self.u16(o.color.0);
        self.u32(o.origin_chain.0)
    }

    pub fn step(&mut self, s: &CooperationStep) -> &mut Self {
        self.pk(&s.participant);
        self.hash(&s.utxo_ref);
        self.hash(&s.prev_step_hash);
        self.sig(&s.signature)
    }
}

pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn finish(&self) -> Result<(), CodecError> {
        match self.data.len() - self.pos {
            0 => Ok(()),
            n => Err(CodecError::Trailing(n)),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.data.len() - self.pos < n {
            return Err(CodecError::Truncated(self.pos));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize, CodecError> {
        let n = self.u32()? as usize;
        if n > self.data.len() - self.pos {
            return Err(CodecError::BadLength(n));
        }
        Ok(n)
    }

    pub fn bytes(&mut self) -> Result<Vec<u8>, CodecError> {
        let n = self.len()?;
        Ok(self.take(n)?.to_vec())
    }

    pub fn str(&mut self) -> Result<String, CodecError> {
        let at = self.pos;
        String::from_utf8(self.bytes()?).map_err(|_| CodecError::BadString(at))
    }

    pub fn hash(&mut self) -> Result<Hash, CodecError> {
        Ok(Hash(self.take(32)?.try_into().unwrap()))
    }

    fn flag(&mut self, what: &'static str) -> Result<bool, CodecError> {
        let offset = self.pos;
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            tag => Err(CodecError::BadTag { what, tag, offset }),
        }
    }

    /// Count prefix for a list whose items occupy at least `min_item` bytes.
    pub fn count(&mut self, min_item: usize) -> Result<usize, CodecError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item) > self.data.len() - self.pos {
            return Err(CodecError::BadLength(n));
        }
        Ok(n)
    }

    pub fn pk(&mut self) -> Result<PublicKeyRef, CodecError> {
        let offset = self.pos;
        let tag = self.u8()?;
        let scheme = Scheme::from_tag(tag).ok_or(CodecError::BadTag { what: "scheme", tag, offset })?;
        Ok(PublicKeyRef { scheme, key: self.take(32)?.try_into().unwrap() })
    }

    pub fn sig(&mut self) -> Result<SignatureRecord, CodecError> {
        let signer = self.pk()?;
        let hash = self.hash()?;
        let proof = self.bytes()?;
        Ok(SignatureRecord { signer, output: VrfOutput { hash, proof } })
    }

    pub fn opt_sig(&mut self) -> Result<Option<SignatureRecord>, CodecError> {
        Ok(if self.flag("option")? { Some(self.sig()?) } else { None })
    }

    pub fn output(&mut self) -> Result<TxOutput, CodecError> {
        let owner = self.pk()?;
        let value = self.u64()?;
        let offset = self.pos;
        let tag = self.u8()?;
        let kind = UtxoKind::from_tag(tag).ok_or(CodecError::BadTag { what: "utxo kind", tag, offset })?;
        let entity = EntityId(self.str()?);
        let color = ColorTag(self.u16()?);
        let origin_chain = ChainId(self.u32()?);
        Ok(TxOutput { owner, value, kind, entity, color, origin_chain })
    }

    pub fn step(&mut self) -> Result<CooperationStep, CodecError> {
        Ok(CooperationStep {
            participant: self.pk()?,
            utxo_ref: self.hash()?,
            prev_step_hash: self.hash()?,
            signature: self.sig()?,
        })
    }
}

const MIN_INPUT: usize = 33;
const MIN_OUTPUT: usize = 33 + 8 + 1 + 4 + 2 + 4;
const MIN_STEP: usize = 33 + 32 + 32 + 33 + 32 + 4;

/// Full canonical encoding of a transaction, in fixed field order:
/// vins, vouts, color, reference, cooperation, tx_data, tx_signature,
/// block_data.
pub fn canonical_serialize(tx: &Transaction) -> Vec<u8> {
    let mut w = Writer::new();
    write_body(&mut w, tx);
    w.opt_sig(&tx.tx_signature);
    match &tx.block_data {
        None => w.u8(0),
        Some(bd) => w.u8(1).u64(bd.block_number).u32(bd.tx_index),
    };
    w.into_bytes()
}

/// Encoding of everything the committer signs: all fields before
/// tx_signature.
pub(crate) fn write_body(w: &mut Writer, tx: &Transaction) {
    w.u32(tx.vins.len() as u32);
    for vin in &tx.vins {
        w.hash(&vin.prev_utxo);
        w.opt_sig(&vin.owner_signature);
    }
    w.u32(tx.vouts.len() as u32);
    for o in &tx.vouts {
        w.output(o);
    }
    w.u16(tx.color.0);
    match &tx.reference {
        None => w.u8(0),
        Some(h) => w.u8(1).hash(h),
    };
    w.u32(tx.cooperation.len() as u32);
    for s in &tx.cooperation {
        w.step(s);
    }
    w.bytes(&tx.tx_data);
}

pub fn parse_transaction(bytes: &[u8]) -> Result<Transaction, CodecError> {
    let mut r = Reader::new(bytes);
    let tx = read_transaction(&mut r)?;
    r.finish()?;
    Ok(tx)
}

pub fn read_transaction(r: &mut Reader<'_>) -> Result<Transaction, CodecError> {
    let n = r.count(MIN_INPUT)?;
    let mut vins = Vec::with_capacity(n);
    for _ in 0..n {
        let prev_utxo = r.hash()?;
        let owner_signature = r.opt_sig()?;
        vins.push(TxInput { prev_utxo, owner_signature });
    }
    let n = r.count(MIN_OUTPUT)?;
    let mut vouts = Vec::with_capacity(n);
    for _ in 0..n {
        vouts.push(r.output()?);
    }
    let color = ColorTag(r.u16()?);
    let reference = if r.flag("option")? { Some(r.hash()?) } else { None };
    let n = r.count(MIN_STEP)?;
    let mut cooperation = Vec::with_capacity(n);
    for _ in 0..n {
        cooperation.push(r.step()?);
    }
    let tx_data = r.bytes()?;
    let tx_signature = r.opt_sig()?;
    let block_data = if r.flag("option")? {
        Some(BlockData { block_number: r.u64()?, tx_index: r.u32()? })
    } else {
        None
    };
    Ok(Transaction { vins, vouts, color, reference, cooperation, tx_data, tx_signature, block_data })
}

pub fn encode_signature(s: &SignatureRecord) -> Vec<u8> {
    let mut w = Writer::new();
    w.sig(s);
    w.into_bytes()
}

pub fn decode_signature(bytes: &[u8]) -> Result<SignatureRecord, CodecError> {
    let mut r = Reader::new(bytes);
    let s = r.sig()?;
    r.finish()?;
    Ok(s)
}

/// Block encoding: number, parent, tx list, consensus signature. The id is
/// not encoded; it is recomputed on decode.
pub fn encode_block(b: &Block) -> Vec<u8> {
    let mut w = Writer::new();
    w.u64(b.number).hash(&b.parent).u32(b.transactions.len() as u32);
    for tx in &b.transactions {
        w.bytes(&canonical_serialize(tx));
    }
    w.sig(&b.consensus_signature);
    w.into_bytes()
}

pub fn decode_block(bytes: &[u8]) -> Result<Block, CodecError> {
    let mut r = Reader::new(bytes);
    let number = r.u64()?;
    let parent = r.hash()?;
    let n = r.count(4)?;
    let mut transactions = Vec::with_capacity(n);
    for _ in 0..n {
        let raw = r.bytes()?;
        transactions.push(parse_transaction(&raw)?);
    }
    let consensus_signature = r.sig()?;
    r.finish()?;
    let id = Block::compute_id(number, &parent, &transactions, &consensus_signature);
    Ok(Block { number, parent, transactions, consensus_signature, id })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reader_rejects_truncation_and_trailing() {
        let mut w = Writer::new();
        w.u32(7).u8(1);
        let bytes = w.into_bytes();
        let mut r = Reader::new(&bytes[..3]);
        assert_eq!(r.u32(), Err(CodecError::Truncated(0)));
        let mut r = Reader::new(&bytes);
        r.u32().unwrap();
        assert_eq!(r.finish(), Err(CodecError::Trailing(1)));
    }

    #[test]
    fn oversized_length_prefix_is_rejected() {
        let mut w = Writer::new();
        w.u32(1_000_000).raw(b"abc");
        let bytes = w.into_bytes();
        assert_eq!(Reader::new(&bytes).bytes(), Err(CodecError::BadLength(1_000_000)));
    }

    #[test]
    fn non_canonical_flags_are_rejected() {
        let mut w = Writer::new();
        w.u8(2);
        let bytes = w.into_bytes();
        assert!(matches!(
            Reader::new(&bytes).opt_sig(),
            Err(CodecError::BadTag { what: "option", tag: 2, .. })
        ));
    }
}
