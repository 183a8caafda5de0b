#include <brsnis/cli.hpp>

int main(int argc, char** argv) { return brsnis::cli::run_cli(argc, argv); }
