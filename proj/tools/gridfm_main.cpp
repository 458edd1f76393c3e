// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#include "gridfm/cli.hpp"

int main(int argc, char** argv) { return gridfm::cli_main(argc, argv); }
