#include "drvcg/cli.hpp"

int main(int argc, char** argv) { return drvcg::cli::dispatch(argc, argv); }
