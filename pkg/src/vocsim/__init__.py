"""Virtual-oscillator inverter simulation, averaging, droop correspondence and stability checks."""
