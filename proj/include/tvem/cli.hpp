#pragma once

namespace tvem {

/// Entry point of the `tvem` command line tool.
int run_cli(int argc, char** argv);

}  // namespace tvem
