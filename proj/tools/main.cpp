#include "tganet/cli.hpp"

int main(int argc, char** argv) { return tganet::cli::dispatch(argc, argv); }
