import numpy as np
from django.test import SimpleTestCase

from .exceptions import NonScalarOutputError, NotALeafError, ShapeMismatchError, UnknownPrimitiveError
from .gradcheck import gradcheck
from .graph import Graph, grad
from .primitives import apply, conv2d_backward_input, conv2d_backward_kernel, conv2d_forward


def three_layer_net(rng, size=8, width=4):
    graph = Graph()
    x = graph.leaf(rng.standard_normal((1, size, size)), name="x")
    k1 = graph.leaf(rng.standard_normal((width, 1, 3, 3)) * 0.5, name="k1")
    b1 = graph.leaf(rng.standard_normal(width) * 0.1, name="b1")
    k2 = graph.leaf(rng.standard_normal((width, width, 3, 3)) * 0.3, name="k2")
    k3 = graph.leaf(rng.standard_normal((1, width, 3, 3)) * 0.3, name="k3")
    h = graph.relu(graph.conv2d(x, k1, b1))
    h = graph.relu(graph.conv2d(h, k2))
    out = graph.conv2d(h, k3)
    graph.sq_norm(out)
    return graph, {"x": x, "k1": k1, "b1": b1, "k2": k2, "k3": k3}


class PrimitiveTests(SimpleTestCase):

    def test_conv2d_ones_sums_neighbourhood(self):
        out = apply("conv2d", np.ones((1, 3, 3)), np.ones((1, 1, 3, 3)))
        self.assertEqual(out.shape, (1, 3, 3))
        self.assertEqual(out[0, 1, 1], 9.0)
        self.assertEqual(out[0, 0, 0], 4.0)
        self.assertEqual(out[0, 0, 1], 6.0)

    def test_conv2d_zero_kernel(self):
        rng = np.random.default_rng(0)
        out = apply("conv2d", rng.standard_normal((2, 5, 7)), np.zeros((3, 2, 3, 3)))
        self.assertEqual(out.shape, (3, 5, 7))
        self.assertFalse(np.any(out))

    def test_conv2d_bias_is_added_per_channel(self):
        out = apply("conv2d", np.zeros((1, 4, 4)), np.zeros((2, 1, 3, 3)), np.array([1.5, -2.0]))
        np.testing.assert_array_equal(out[0], np.full((4, 4), 1.5))
        np.testing.assert_array_equal(out[1], np.full((4, 4), -2.0))

    def test_conv2d_shape_mismatch_names_both_shapes(self):
        with self.assertRaises(ShapeMismatchError) as ctx:
            apply("conv2d", np.ones((2, 4, 4)), np.ones((1, 3, 3, 3)))
        message = str(ctx.exception)
        self.assertIn("conv2d", message)
        self.assertIn("(2, 4, 4)", message)
        self.assertIn("(1, 3, 3, 3)", message)

    def test_conv2d_rejects_even_kernel(self):
        with self.assertRaises(ShapeMismatchError):
            apply("conv2d", np.ones((1, 4, 4)), np.ones((1, 1, 2, 2)))

    def test_relu(self):
        np.testing.assert_array_equal(apply("relu", [-1.0, 0.0, 2.0]), [0.0, 0.0, 2.0])

    def test_elementwise_shape_mismatch(self):
        with self.assertRaises(ShapeMismatchError) as ctx:
            apply("add", np.ones(3), np.ones(4))
        self.assertIn("add", str(ctx.exception))

    def test_unknown_primitive(self):
        with self.assertRaises(UnknownPrimitiveError):
            apply("maxpool", np.ones(3))

    def test_conv2d_adjoint_identities(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            x = rng.standard_normal((3, 6, 5))
            kernel = rng.standard_normal((4, 3, 3, 3))
            u = rng.standard_normal((4, 6, 5))
            lhs = np.vdot(conv2d_forward(x, kernel), u)
            self.assertAlmostEqual(lhs, np.vdot(x, conv2d_backward_input(u, kernel)), delta=1e-9)
            self.assertAlmostEqual(lhs, np.vdot(kernel, conv2d_backward_kernel(u, x, 3)), delta=1e-9)


class GradTests(SimpleTestCase):

    def test_quadratic_gradient(self):
        graph = Graph()
        z = graph.leaf([1.0, -2.0, 3.0])
        graph.sq_norm(z)
        np.testing.assert_allclose(grad(graph, [z])[0], [2.0, -4.0, 6.0])

    def test_relu_sum_gradient(self):
        graph = Graph()
        z = graph.leaf([-1.0, 2.0])
        graph.sum(graph.relu(z))
        np.testing.assert_array_equal(grad(graph, [z])[0], [0.0, 1.0])

    def test_relu_subgradient_at_zero_is_zero(self):
        graph = Graph()
        z = graph.leaf([0.0])
        graph.sum(graph.relu(z))
        np.testing.assert_array_equal(grad(graph, [z])[0], [0.0])

    def test_non_scalar_output(self):
        graph = Graph()
        z = graph.leaf([1.0, 2.0])
        graph.relu(z)
        with self.assertRaises(NonScalarOutputError):
            grad(graph, [z])

    def test_interior_node_rejected(self):
        graph = Graph()
        z = graph.leaf([1.0, 2.0])
        hidden = graph.relu(z)
        graph.sum(hidden)
        with self.assertRaises(NotALeafError):
            grad(graph, [hidden])

    def test_unused_leaf_gets_zero_gradient(self):
        graph = Graph()
        z = graph.leaf([1.0, 2.0])
        unused = graph.leaf(np.ones((2, 2)))
        graph.sq_norm(z)
        grads = grad(graph, [z, unused])
        np.testing.assert_array_equal(grads[1], np.zeros((2, 2)))

    def test_shared_leaf_accumulates(self):
        graph = Graph()
        z = graph.leaf([1.0, 2.0])
        graph.sum(graph.add(z, graph.scale(z, 3.0)))
        np.testing.assert_array_equal(grad(graph, [z])[0], [4.0, 4.0])

    def test_gradient_is_deterministic(self):
        graph, leaves = three_layer_net(np.random.default_rng(2))
        first = grad(graph, [leaves["k2"]])[0]
        second = grad(graph, [leaves["k2"]])[0]
        np.testing.assert_array_equal(first, second)

    def test_gradient_is_linear_in_the_loss(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            z_value = rng.standard_normal((1, 5, 5))
            k_value = rng.standard_normal((2, 1, 3, 3))
            a, b = rng.standard_normal(2)

            def losses(graph):
                z = graph.leaf(z_value)
                k = graph.leaf(k_value)
                h = graph.relu(graph.conv2d(z, k))
                return z, graph.sq_norm(h), graph.sum(h)

            graph = Graph()
            z, l1, l2 = losses(graph)
            combined = graph.add(graph.scale(l1, a), graph.scale(l2, b))
            g_combined = grad(graph, [z], combined)[0]
            g1 = grad(graph, [z], l1)[0]
            g2 = grad(graph, [z], l2)[0]
            np.testing.assert_allclose(g_combined, a * g1 + b * g2, rtol=0, atol=1e-12 * max(1.0, np.abs(g_combined).max()))

    def test_recorded_values_are_read_only(self):
        graph = Graph()
        z = graph.leaf([1.0])
        with self.assertRaises(ValueError):
            z.value[0] = 2.0


class GradcheckTests(SimpleTestCase):

    def test_quadratic(self):
        graph = Graph()
        z = graph.leaf([1.0, 2.0, 3.0])
        graph.sq_norm(z)
        self.assertLess(gradcheck(graph, z), 1e-8)

    def test_constant_graph(self):
        graph = Graph()
        z = graph.leaf([1.0, 2.0, 3.0])
        c = graph.leaf([4.0, 5.0])
        graph.sq_norm(c)
        np.testing.assert_array_equal(grad(graph, [z])[0], np.zeros(3))
        self.assertLess(gradcheck(graph, z), 1e-8)

    def test_three_layer_net(self):
        graph, leaves = three_layer_net(np.random.default_rng(4))
        for name in ("x", "k1", "b1", "k2", "k3"):
            with self.subTest(leaf=name):
                self.assertLess(gradcheck(graph, leaves[name]), 1e-5)

    def test_sampled_coordinates(self):
        graph, leaves = three_layer_net(np.random.default_rng(5))
        self.assertLess(gradcheck(graph, leaves["k2"], coords=[0, 17, 143]), 1e-5)

    def test_rejects_non_positive_eps(self):
        graph = Graph()
        z = graph.leaf([1.0])
        graph.sq_norm(z)
        with self.assertRaises(ValueError):
            gradcheck(graph, z, eps=0.0)
