//! Holds the `acceptance` test target; run it with
//! `cargo test -p netsaddle-acceptance --test acceptance`.
