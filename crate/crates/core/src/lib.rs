pub mod codec;
pub mod crypto;
pub mod hls;
pub mod identity;
pub mod ledger;
pub mod licensing;
pub mod storage;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/crypto.md")]
    mod crypto {}
    #[doc = include_str!("../../../book/src/encoding.md")]
    mod encoding {}
    #[doc = include_str!("../../../book/src/identity.md")]
    mod identity {}
    #[doc = include_str!("../../../book/src/storage.md")]
    mod storage {}
    #[doc = include_str!("../../../book/src/ledger.md")]
    mod ledger {}
    #[doc = include_str!("../../../book/src/licensing.md")]
    mod licensing {}
    #[doc = include_str!("../../../book/src/hls.md")]
    mod hls {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
