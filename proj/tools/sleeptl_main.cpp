// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include "commands.hpp"

int main(int argc, char** argv) { return sleeptl::cli::run(argc, argv); }
