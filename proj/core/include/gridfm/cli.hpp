// Copyright 2026 The gridfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace gridfm {

/// Command-line entry point: run / batch / report / validate.
/// Exit status: 0 success, 1 simulation abort, 2 configuration error.
int cli_main(int argc, const char* const* argv);

}  // namespace gridfm
