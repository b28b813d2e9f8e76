#include "histlayer/cli.hpp"

int main(int argc, char** argv) { return histlayer::run_cli(argc, argv); }
