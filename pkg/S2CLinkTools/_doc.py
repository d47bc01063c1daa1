"""
A package for simulating screen-to-camera visible light links and for
identifying and synchronizing their frames with a convolutional neural network.
"""
