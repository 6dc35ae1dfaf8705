// Copyright 2026 The uqshift Authors
// SPDX-License-Identifier: Apache-2.0
//
// Benchmark harness CLI; see README for subcommands.

#include <cstdio>

int main() {
  std::puts("uqbench: not wired up yet");
  return 0;
}
