#include "tvem/cli.hpp"

int main(int argc, char** argv) { return tvem::run_cli(argc, argv); }
