// Copyright 2026 The qtraj Authors
// SPDX-License-Identifier: Apache-2.0

fn main() {
    std::process::exit(qtraj::cli::main_with_args(std::env::args_os()));
}
