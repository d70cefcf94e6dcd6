"""Graph flows, fat graphs and Morse-theoretic operations."""
