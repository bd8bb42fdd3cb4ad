"""Tests for stackdrive."""
